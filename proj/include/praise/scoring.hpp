#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "praise/errors.hpp"

namespace praise {

enum class ScoreMetric { ExactMatch, TokenF1 };

inline std::string_view metric_name(ScoreMetric m) {
  return m == ScoreMetric::ExactMatch ? "em" : "f1";
}

inline ScoreMetric metric_from_name(std::string_view name) {
  if (name == "em") return ScoreMetric::ExactMatch;
  if (name == "f1") return ScoreMetric::TokenF1;
  throw ValidationError("unknown metric: " + std::string(name) + " (expected em or f1)");
}

struct NormalizedAnswer {
  std::vector<std::string> tokens;
};

// Reference answer normalization: ASCII-lowercase, delete punctuation
// (every non-alphanumeric, non-space byte), split on whitespace, drop the
// articles a/an/the. Digits and letters survive; everything else vanishes
// without leaving a boundary ("u.s.a." becomes "usa").
inline NormalizedAnswer normalize(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    const bool alnum = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
                       c == '\v';
    if (alnum) {
      cleaned.push_back(c);
    } else if (space) {
      cleaned.push_back(' ');
    }
    // other bytes deleted
  }
  NormalizedAnswer out;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && cleaned[i] == ' ') ++i;
    std::size_t j = i;
    while (j < cleaned.size() && cleaned[j] != ' ') ++j;
    if (j > i) {
      std::string tok = cleaned.substr(i, j - i);
      if (tok != "a" && tok != "an" && tok != "the") out.tokens.push_back(std::move(tok));
    }
    i = j;
  }
  return out;
}

// 1.0 iff the normalized token lists are identical (order included).
inline double exact_match(std::string_view pred, std::string_view gold) {
  return normalize(pred).tokens == normalize(gold).tokens ? 1.0 : 0.0;
}

// Multiset-overlap F1 over normalized tokens. Both lists empty scores 1
// (equal multisets); exactly one empty scores 0. Guarantees
// exact_match <= token_f1 for every input pair.
inline double token_f1(std::string_view pred, std::string_view gold) {
  const std::vector<std::string> p = normalize(pred).tokens;
  const std::vector<std::string> g = normalize(gold).tokens;
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::unordered_map<std::string, int> counts;
  for (const std::string& t : g) counts[t] += 1;
  int overlap = 0;
  for (const std::string& t : p) {
    const auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      it->second -= 1;
      overlap += 1;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(p.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

inline double score_answer(std::string_view pred, std::string_view gold, ScoreMetric m) {
  return m == ScoreMetric::ExactMatch ? exact_match(pred, gold) : token_f1(pred, gold);
}

}  // namespace praise
