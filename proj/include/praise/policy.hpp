#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "praise/errors.hpp"
#include "praise/nn.hpp"
#include "praise/prompts.hpp"
#include "praise/rng.hpp"
#include "praise/search_env.hpp"
#include "praise/text.hpp"
#include "praise/trajectory.hpp"

namespace praise {

// Decoding is scaffolded: the runtime forces every tag and the turn
// structure (exactly max_turns search turns, then the answer). The model
// samples segment content only. A sampled terminator word ends the segment
// early and stays in the content; a sampled structural token (tag/pad/unk)
// closes the segment without being emitted; a segment that would close empty
// receives one forced unk content token, which is masked from training.
struct RolloutOptions {
  int max_turns = 2;
  int think_budget = 2;
  int search_budget = 16;
  int answer_budget = 8;
  int retrieval_top_k = 3;
  double temperature = 1.0;
  bool disable_retrieval = false;

  void validate() const {
    if (max_turns < 0) throw ValidationError("max_turns must be >= 0");
    if (think_budget < 1 || search_budget < 1 || answer_budget < 1) {
      throw ValidationError("segment budgets must be >= 1");
    }
    if (retrieval_top_k < 1) throw ValidationError("retrieval_top_k must be >= 1");
    if (temperature < 0.0) throw ValidationError("temperature must be >= 0");
  }
};

// All sampled ids for one segment-content generation, in order, with the
// model logprob of each (exp(logprob) equals the forward() probability). A
// structural stop token is recorded here but never enters the content.
struct GenerationRecord {
  std::vector<int> ids;
  std::vector<double> logprobs;
  PromptMode mode = PromptMode::Search;
  bool truncated = false;
};

// One policy-stream token: where it sits in the full context, and whether it
// was sampled (trainable) or forced (masked from every loss).
struct StreamToken {
  int position = 0;
  int id = 0;
  double logprob = 0.0;
  bool sampled = false;
};

struct RolloutResult {
  Trajectory trajectory;
  std::vector<int> full_ids;
  std::vector<StreamToken> stream;
  std::vector<double> stream_values;  // value head at each stream position
  int prompt_length = 0;
  int forced_substitutions = 0;
  int truncated_segments = 0;
};

struct AnswerSample {
  std::string answer_text;  // terminator-stripped
  std::string raw_text;     // answer segment content as generated
  std::vector<int> full_ids;
  std::vector<StreamToken> stream;
  std::vector<double> stream_values;
  int forced_substitutions = 0;
};

// Closed vocabulary for a world: reserved ids, template words, relation
// names, entity names. Depends only on the entity/relation counts, so any
// world with the same counts shares a vocabulary with a checkpoint.
inline Vocabulary build_vocabulary(const KnowledgeBase& kb) {
  std::vector<std::string> words;
  for (const std::string_view w : kPromptWords) words.emplace_back(w);
  for (const std::string& r : kb.relation_names) words.push_back(r);
  for (const std::string& e : kb.entity_names) words.push_back(e);
  return Vocabulary(std::move(words));
}

namespace detail {

struct ContentTok {
  int id = 0;
  double logprob = 0.0;
  bool sampled = false;
  double value = 0.0;
};

// Assembles full_ids, the policy stream, and trajectory segments in lockstep.
struct RolloutBuilder {
  const Vocabulary& vocab;
  RolloutResult out;
  std::vector<int> pending;
  SegmentKind pending_kind = SegmentKind::Think;

  explicit RolloutBuilder(const Vocabulary& v) : vocab(v) {}

  std::span<const int> context() const { return out.full_ids; }

  void force_id(int id) { out.full_ids.push_back(id); }

  void force_text(std::string_view text) {
    for (const int id : vocab.encode(text)) force_id(id);
  }

  void begin_policy_segment(SegmentKind kind) {
    pending_kind = kind;
    pending.clear();
    force_id(vocab.tag_id(open_tag(kind)));
  }

  void add_content(const ContentTok& c) {
    out.full_ids.push_back(c.id);
    out.stream.push_back(StreamToken{static_cast<int>(out.full_ids.size()) - 1, c.id,
                                     c.logprob, c.sampled});
    out.stream_values.push_back(c.value);
    pending.push_back(c.id);
  }

  void end_policy_segment() {
    // Generators substitute a forced unk before closing, so an empty segment
    // can only mean a generator that made no progress.
    if (pending.empty()) throw GenerationStalledError("segment closed with no content");
    force_id(vocab.tag_id(close_tag(pending_kind)));
    out.trajectory.segments.emplace_back(pending_kind, vocab.decode(pending));
  }

  void result_segment(std::string_view text) {
    force_id(vocab.tag_id(open_tag(SegmentKind::Result)));
    force_text(text);
    force_id(vocab.tag_id(close_tag(SegmentKind::Result)));
    out.trajectory.segments.emplace_back(SegmentKind::Result, std::string(text));
  }

  const std::string& last_segment_text() const {
    return out.trajectory.segments.back().text;
  }
};

// Samples one id from the trace. temperature 0 is argmax with lowest-id
// tie-break; otherwise the temperature-scaled softmax. The recorded logprob
// is always the model's (temperature-1) logprob.
inline int pick_token(const ForwardTrace& t, double temperature, Rng& rng) {
  const std::size_t n = t.logits.size();
  if (temperature <= 0.0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (t.logits[i] > t.logits[best]) best = i;
    }
    return static_cast<int>(best);
  }
  const double u = rng.uniform01();
  if (temperature == 1.0) {
    double cum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cum += t.probs[i];
      if (u < cum) return static_cast<int>(i);
    }
    return static_cast<int>(n - 1);
  }
  double mx = t.logits[0] / temperature;
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, t.logits[i] / temperature);
  double z = 0.0;
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = std::exp(t.logits[i] / temperature - mx);
    z += q[i];
  }
  double cum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cum += q[i] / z;
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(n - 1);
}

// One scaffolded content generation. Returns whether the segment hit its
// budget without terminating (truncation).
inline bool neural_segment(RolloutBuilder& b, const Network& net,
                           std::span<const double> params, SegmentKind kind, int budget,
                           double temperature, Rng& rng, GenerationRecord* record) {
  b.begin_policy_segment(kind);
  ForwardTrace trace;
  bool terminated = false;
  int emitted = 0;
  for (int i = 0; i < budget; ++i) {
    net.forward(params, b.context(), trace);
    const int id = pick_token(trace, temperature, rng);
    const double lp = net.log_prob(trace, id);
    if (record) {
      record->ids.push_back(id);
      record->logprobs.push_back(lp);
    }
    if (b.vocab.is_structural(id)) {
      if (emitted == 0) {
        b.add_content(ContentTok{Vocabulary::kUnkId,
                                 net.log_prob(trace, Vocabulary::kUnkId), false,
                                 trace.value});
        b.out.forced_substitutions += 1;
      }
      terminated = true;
      break;
    }
    b.add_content(ContentTok{id, lp, true, trace.value});
    ++emitted;
    if (id == Vocabulary::kTerminatorId) {
      terminated = true;
      break;
    }
  }
  b.end_policy_segment();
  if (!terminated) b.out.truncated_segments += 1;
  return !terminated;
}

inline void scripted_segment(RolloutBuilder& b, SegmentKind kind,
                             std::span<const std::string> words, int budget) {
  b.begin_policy_segment(kind);
  if (words.empty()) {
    b.add_content(ContentTok{Vocabulary::kUnkId, 0.0, false, 0.0});
  } else {
    const int n = std::max(1, std::min<int>(budget, static_cast<int>(words.size())));
    for (int i = 0; i < n; ++i) {
      b.add_content(ContentTok{b.vocab.id_of(words[static_cast<std::size_t>(i)]), 0.0,
                               false, 0.0});
    }
  }
  b.end_policy_segment();
}

}  // namespace detail

// Spec-level sampler over raw text context: samples until a structural token,
// a terminator, or the budget. The structural stop token is recorded but is
// not content.
inline GenerationRecord generate(const Network& net, std::span<const double> params,
                                 const Vocabulary& vocab, PromptMode mode,
                                 std::string_view context_text, int max_tokens,
                                 double temperature, std::uint64_t seed) {
  if (max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
  GenerationRecord rec;
  rec.mode = mode;
  Rng rng(Rng::mix(seed, 0x67656e65ULL));  // "gene"
  std::vector<int> ctx = vocab.encode(context_text);
  ForwardTrace trace;
  for (int i = 0; i < max_tokens; ++i) {
    net.forward(params, ctx, trace);
    const int id = detail::pick_token(trace, temperature, rng);
    rec.ids.push_back(id);
    rec.logprobs.push_back(net.log_prob(trace, id));
    if (vocab.is_structural(id) || id == Vocabulary::kTerminatorId) return rec;
    ctx.push_back(id);
  }
  rec.truncated = true;
  return rec;
}

// Full search-mode rollout under the scaffold. The returned trajectory always
// satisfies the grammar; stream/values align index-wise with the policy
// tokens.
inline RolloutResult rollout_search(const Network& net, std::span<const double> params,
                                    const Vocabulary& vocab, const KnowledgeBase& kb,
                                    std::string_view query, const RolloutOptions& opts,
                                    std::uint64_t seed) {
  opts.validate();
  Rng rng(Rng::mix(seed, 0x726f6c6cULL));  // "roll"
  detail::RolloutBuilder b(vocab);
  b.out.trajectory.query = std::string(query);
  b.force_text(render_search_prompt(query));
  b.out.prompt_length = static_cast<int>(b.out.full_ids.size());

  detail::neural_segment(b, net, params, SegmentKind::Think, opts.think_budget,
                         opts.temperature, rng, nullptr);
  for (int t = 0; t < opts.max_turns; ++t) {
    detail::neural_segment(b, net, params, SegmentKind::Search, opts.search_budget,
                           opts.temperature, rng, nullptr);
    const std::string search_text = strip_terminator(b.last_segment_text());
    Observation obs;
    if (!opts.disable_retrieval) {
      obs = retrieve(kb, search_text, opts.retrieval_top_k);
    }
    b.result_segment(obs.text.empty() ? "none" : obs.text);
    detail::neural_segment(b, net, params, SegmentKind::Think, opts.think_budget,
                           opts.temperature, rng, nullptr);
  }
  b.force_text(render_answer_forcing_suffix(query));
  detail::neural_segment(b, net, params, SegmentKind::Answer, opts.answer_budget,
                         opts.temperature, rng, nullptr);
  validate_segments(b.out.trajectory.segments);
  return std::move(b.out);
}

// Answer-mode generation from a prefix state. Used for prefix scoring and as
// reused training samples.
inline AnswerSample answer_from_prefix(const Network& net, std::span<const double> params,
                                       const Vocabulary& vocab, const PrefixState& prefix,
                                       const RolloutOptions& opts, std::uint64_t seed) {
  opts.validate();
  Rng rng(Rng::mix(seed, 0x616e7377ULL));  // "answ"
  detail::RolloutBuilder b(vocab);
  b.force_text(render_answer_prompt(prefix));
  detail::neural_segment(b, net, params, SegmentKind::Answer, opts.answer_budget,
                         opts.temperature, rng, nullptr);
  AnswerSample s;
  s.raw_text = b.last_segment_text();
  s.answer_text = strip_terminator(s.raw_text);
  s.full_ids = std::move(b.out.full_ids);
  s.stream = std::move(b.out.stream);
  s.stream_values = std::move(b.out.stream_values);
  s.forced_substitutions = b.out.forced_substitutions;
  return s;
}

enum class ScriptedBehavior { Oracle, NoSearch, RandomSearch };

namespace detail {

// The oracle plans from the question text and retrieved results only:
// hidden_chain stays a test certificate.
struct OraclePlan {
  std::string cur;
  std::vector<std::string> relations;
  std::size_t hop = 0;

  static OraclePlan from_query(std::string_view query) {
    const TaskQueryParts parts = parse_task_query(query);
    OraclePlan p;
    p.cur = parts.head;
    p.relations = parts.relations;
    return p;
  }

  bool complete() const { return hop >= relations.size(); }

  // Scans "s r o ; s r o ; ..." (or "none") for the fact continuing the
  // chain; advances through as many hops as the text supports.
  void consume_result(std::string_view result_text) {
    const std::vector<std::string> toks = split_text(result_text);
    if (toks.size() == 1 && toks[0] == "none") return;
    std::vector<std::vector<std::string>> groups(1);
    for (const std::string& t : toks) {
      if (t == ";") {
        groups.emplace_back();
      } else {
        groups.back().push_back(t);
      }
    }
    bool advanced = true;
    while (advanced && !complete()) {
      advanced = false;
      for (const auto& g : groups) {
        if (g.size() != 3) continue;
        if (g[0] == cur && g[1] == relations[hop]) {
          cur = g[2];
          hop += 1;
          advanced = true;
          break;
        }
      }
    }
  }

  std::vector<std::string> search_words() const {
    if (complete()) return {cur, std::string(kTerminatorSurface)};
    return {cur, relations[hop], std::string(kTerminatorSurface)};
  }
};

}  // namespace detail

// Deterministic baseline agents sharing the neural scaffold. Oracle follows
// the relation chain through retrieval; NoSearch answers immediately with the
// head entity; RandomSearch emits noise queries and a random entity answer.
inline RolloutResult rollout_scripted(ScriptedBehavior behavior, const KnowledgeBase& kb,
                                      const Vocabulary& vocab, std::string_view query,
                                      const RolloutOptions& opts, std::uint64_t seed) {
  opts.validate();
  RolloutOptions local = opts;
  if (behavior == ScriptedBehavior::NoSearch) local.max_turns = 0;
  Rng rng(Rng::mix(seed, 0x73637269ULL));  // "scri"
  detail::RolloutBuilder b(vocab);
  b.out.trajectory.query = std::string(query);
  b.force_text(render_search_prompt(query));
  b.out.prompt_length = static_cast<int>(b.out.full_ids.size());

  detail::OraclePlan plan;
  if (behavior != ScriptedBehavior::RandomSearch) {
    plan = detail::OraclePlan::from_query(query);
  }
  const std::vector<std::string> think_words = {"hop", std::string(kTerminatorSurface)};
  const auto random_word = [&] {
    return vocab.surface_of(Vocabulary::kFirstContentId +
                            rng.below_int(vocab.size() - Vocabulary::kFirstContentId));
  };
  const auto random_entity = [&] {
    return kb.entity_names[static_cast<std::size_t>(rng.below_int(kb.n_entities))];
  };

  detail::scripted_segment(b, SegmentKind::Think, think_words, local.think_budget);
  for (int t = 0; t < local.max_turns; ++t) {
    std::vector<std::string> search_words;
    if (behavior == ScriptedBehavior::RandomSearch) {
      search_words = {random_word(), random_word(), std::string(kTerminatorSurface)};
    } else {
      search_words = plan.search_words();
    }
    detail::scripted_segment(b, SegmentKind::Search, search_words, local.search_budget);
    const std::string search_text = strip_terminator(b.last_segment_text());
    Observation obs;
    if (!local.disable_retrieval) {
      obs = retrieve(kb, search_text, local.retrieval_top_k);
    }
    const std::string result_text = obs.text.empty() ? "none" : obs.text;
    b.result_segment(result_text);
    if (behavior != ScriptedBehavior::RandomSearch) plan.consume_result(result_text);
    detail::scripted_segment(b, SegmentKind::Think, think_words, local.think_budget);
  }
  b.force_text(render_answer_forcing_suffix(query));
  std::vector<std::string> answer_words;
  if (behavior == ScriptedBehavior::RandomSearch) {
    answer_words = {random_entity(), std::string(kTerminatorSurface)};
  } else {
    answer_words = {plan.cur, std::string(kTerminatorSurface)};
  }
  detail::scripted_segment(b, SegmentKind::Answer, answer_words, local.answer_budget);
  validate_segments(b.out.trajectory.segments);
  return std::move(b.out);
}

// Scripted answer-mode counterpart: the oracle replays the prefix triples to
// find its current entity; NoSearch answers the head; RandomSearch answers a
// random entity.
inline std::string scripted_answer_from_prefix(ScriptedBehavior behavior,
                                               const PrefixState& prefix,
                                               const KnowledgeBase& kb,
                                               std::uint64_t seed) {
  if (behavior == ScriptedBehavior::RandomSearch) {
    Rng rng(Rng::mix(seed, 0x73616e73ULL));
    return kb.entity_names[static_cast<std::size_t>(rng.below_int(kb.n_entities))];
  }
  detail::OraclePlan plan = detail::OraclePlan::from_query(prefix.query);
  if (behavior == ScriptedBehavior::Oracle) {
    for (const PrefixTriple& t : prefix.triples) plan.consume_result(t.result);
  }
  return plan.cur;
}

}  // namespace praise
