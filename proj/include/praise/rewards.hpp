#pragma once

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "praise/errors.hpp"
#include "praise/scoring.hpp"
#include "praise/trajectory.hpp"

namespace praise {

// v_t for t = 0..T plus the final-answer score u, all against the same gold
// answer under the same metric.
struct PrefixScores {
  std::vector<double> v;
  double u = 0.0;

  int turns() const { return static_cast<int>(v.size()) - 1; }
};

inline PrefixScores compute_prefix_scores(std::span<const std::string> prefix_answers,
                                          std::string_view final_answer,
                                          std::string_view gold, ScoreMetric metric) {
  if (prefix_answers.empty()) {
    throw LengthMismatchError("need at least one prefix answer (s_0)");
  }
  PrefixScores out;
  out.v.reserve(prefix_answers.size());
  for (const std::string& a : prefix_answers) {
    out.v.push_back(score_answer(a, gold, metric));
  }
  out.u = score_answer(final_answer, gold, metric);
  return out;
}

// r_t = alpha * (v_t - v_{t-1}) for t = 1..T. The sum telescopes to
// alpha * (v_T - v_0).
struct ProcessRewards {
  std::vector<double> r;
  double alpha = 0.0;

  double sum() const {
    double s = 0.0;
    for (const double x : r) s += x;
    return s;
  }
};

inline ProcessRewards compute_process_rewards(const PrefixScores& scores, double alpha) {
  if (!(alpha >= 0.0)) throw NegativeAlphaError("alpha must be >= 0");
  ProcessRewards out;
  out.alpha = alpha;
  out.r.reserve(scores.v.size() > 0 ? scores.v.size() - 1 : 0);
  for (std::size_t t = 1; t < scores.v.size(); ++t) {
    out.r.push_back(alpha * (scores.v[t] - scores.v[t - 1]));
  }
  return out;
}

// Sparse per-token rewards over a policy stream: the t-th process reward sits
// at m_t and the outcome reward at m_ans. Entries hold all T+1 defined
// positions, including zero-valued process deltas.
struct TokenRewardVector {
  int length = 0;
  std::vector<std::pair<int, double>> entries;  // (position, value), ascending

  std::vector<double> dense() const {
    std::vector<double> out(static_cast<std::size_t>(length), 0.0);
    for (const auto& [pos, val] : entries) out[static_cast<std::size_t>(pos)] += val;
    return out;
  }

  double sum() const {
    double s = 0.0;
    for (const auto& [pos, val] : entries) s += val;
    return s;
  }

  int nonzero_count() const {
    int n = 0;
    for (const auto& [pos, val] : entries) n += (val != 0.0) ? 1 : 0;
    return n;
  }
};

inline TokenRewardVector assign_token_rewards(const SegmentMarkers& markers,
                                              const ProcessRewards& proc,
                                              double outcome) {
  if (markers.search_ends.size() != proc.r.size()) {
    throw MarkerMismatchError("need exactly one search marker per process reward");
  }
  if (markers.answer_end < 0 || markers.answer_end >= markers.stream_length) {
    throw MarkerMismatchError("answer marker out of stream range");
  }
  TokenRewardVector out;
  out.length = markers.stream_length;
  for (std::size_t t = 0; t < proc.r.size(); ++t) {
    const int pos = markers.search_ends[t];
    if (pos < 0 || pos >= markers.answer_end) {
      throw MarkerMismatchError("search marker out of range");
    }
    out.entries.emplace_back(pos, proc.r[t]);
  }
  out.entries.emplace_back(markers.answer_end, outcome);
  return out;
}

// One prefix-answer sample reused as extra training data: terminal reward is
// the prefix score v_t.
struct ReusedSample {
  int t = 0;
  PrefixState prefix;
  std::string answer;
  double reward = 0.0;
};

inline std::vector<ReusedSample> build_reused_samples(
    std::span<const PrefixState> prefixes, std::span<const std::string> answers,
    const PrefixScores& scores) {
  if (prefixes.size() != answers.size() || prefixes.size() != scores.v.size()) {
    throw LengthMismatchError("prefixes, answers and scores must align");
  }
  std::vector<ReusedSample> out;
  out.reserve(prefixes.size());
  for (std::size_t t = 0; t < prefixes.size(); ++t) {
    out.push_back(ReusedSample{static_cast<int>(t), prefixes[t], answers[t],
                               scores.v[t]});
  }
  return out;
}

// Annotation record written by trajectory scoring, one JSON object per input
// trajectory.
inline nlohmann::json annotation_to_json(const PrefixScores& scores,
                                         const ProcessRewards& proc,
                                         const TokenRewardVector& rewards,
                                         std::span<const ReusedSample> reused) {
  nlohmann::json jr = nlohmann::json::array();
  for (const auto& [pos, val] : rewards.entries) {
    jr.push_back(nlohmann::json::array({pos, val}));
  }
  nlohmann::json jd = nlohmann::json::array();
  for (const ReusedSample& s : reused) {
    jd.push_back({{"t", s.t}, {"answer", s.answer}, {"reward", s.reward}});
  }
  return {{"v", scores.v},          {"u", scores.u},
          {"alpha", proc.alpha},    {"r_proc", proc.r},
          {"token_rewards", jr},    {"reused", jd}};
}

}  // namespace praise
