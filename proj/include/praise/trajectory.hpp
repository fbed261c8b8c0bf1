#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "praise/errors.hpp"
#include "praise/text.hpp"

namespace praise {

enum class SegmentKind { Think, Search, Result, Answer };
enum class Origin { Policy, Environment };

inline std::string_view kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::Think: return "think";
    case SegmentKind::Search: return "search";
    case SegmentKind::Result: return "result";
    case SegmentKind::Answer: return "answer";
  }
  throw ShapeMismatchError("bad SegmentKind");
}

inline SegmentKind kind_from_name(std::string_view name) {
  if (name == "think") return SegmentKind::Think;
  if (name == "search") return SegmentKind::Search;
  if (name == "result") return SegmentKind::Result;
  if (name == "answer") return SegmentKind::Answer;
  throw ValidationError("unknown segment kind: " + std::string(name));
}

inline Origin origin_for(SegmentKind k) {
  return k == SegmentKind::Result ? Origin::Environment : Origin::Policy;
}

inline std::string_view open_tag(SegmentKind k) {
  switch (k) {
    case SegmentKind::Think: return kTagLiterals[0];
    case SegmentKind::Search: return kTagLiterals[2];
    case SegmentKind::Result: return kTagLiterals[4];
    case SegmentKind::Answer: return kTagLiterals[6];
  }
  throw ShapeMismatchError("bad SegmentKind");
}

inline std::string_view close_tag(SegmentKind k) {
  switch (k) {
    case SegmentKind::Think: return kTagLiterals[1];
    case SegmentKind::Search: return kTagLiterals[3];
    case SegmentKind::Result: return kTagLiterals[5];
    case SegmentKind::Answer: return kTagLiterals[7];
  }
  throw ShapeMismatchError("bad SegmentKind");
}

// One tagged span. text is the raw bytes between the tags, never trimmed.
// trailing_gap carries whitespace that appeared after the closing tag in the
// source string, so serialize() reproduces input byte-exactly.
struct Segment {
  SegmentKind kind;
  Origin origin;
  std::string text;
  std::string trailing_gap;

  Segment(SegmentKind k, std::string t, std::string gap = "")
      : kind(k), origin(origin_for(k)), text(std::move(t)), trailing_gap(std::move(gap)) {}
};

inline bool whitespace_only(std::string_view s) {
  for (const char c : s) {
    if (!is_space_char(c)) return false;
  }
  return true;
}

// Enforces the (Think Search Result)* Think Answer shape, non-empty segment
// text, and kind-consistent origins. Illegal transitions raise
// GrammarViolationError; running out of segments before an Answer raises
// MissingAnswerError.
inline void validate_segments(const std::vector<Segment>& segments) {
  enum class State { ExpectThink, AfterThink, AfterSearch, AfterResult, Done };
  State state = State::ExpectThink;
  for (const Segment& seg : segments) {
    if (whitespace_only(seg.text)) {
      throw GrammarViolationError("empty " + std::string(kind_name(seg.kind)) + " segment");
    }
    if (seg.origin != origin_for(seg.kind)) {
      throw GrammarViolationError("segment origin does not match its kind");
    }
    const auto reject = [&] {
      throw GrammarViolationError("unexpected " + std::string(kind_name(seg.kind)) +
                                  " segment");
    };
    switch (state) {
      case State::ExpectThink:
        if (seg.kind != SegmentKind::Think) reject();
        state = State::AfterThink;
        break;
      case State::AfterThink:
        if (seg.kind == SegmentKind::Search) {
          state = State::AfterSearch;
        } else if (seg.kind == SegmentKind::Answer) {
          state = State::Done;
        } else {
          reject();
        }
        break;
      case State::AfterSearch:
        if (seg.kind != SegmentKind::Result) reject();
        state = State::AfterResult;
        break;
      case State::AfterResult:
        if (seg.kind != SegmentKind::Think) reject();
        state = State::AfterThink;
        break;
      case State::Done:
        throw GrammarViolationError("segment after answer");
    }
  }
  if (state != State::Done) throw MissingAnswerError("trajectory ends without an answer");
}

// A full tagged trajectory for one query. Segments always satisfy
// validate_segments once construction or parsing finishes.
struct Trajectory {
  std::string query;
  std::vector<Segment> segments;
  std::string leading_gap;  // whitespace before the first tag in the source

  int turns() const {
    int t = 0;
    for (const Segment& s : segments) t += (s.kind == SegmentKind::Search) ? 1 : 0;
    return t;
  }

  const Segment& answer_segment() const {
    if (segments.empty() || segments.back().kind != SegmentKind::Answer) {
      throw MissingAnswerError("trajectory has no answer segment");
    }
    return segments.back();
  }

  // Semantic final answer: raw answer text with one trailing terminator word
  // removed. Scoring and evaluation read this form.
  std::string final_answer() const { return strip_terminator(answer_segment().text); }
};

namespace detail {

struct TagHit {
  std::size_t pos;
  std::size_t literal;  // index into kTagLiterals
};

// First occurrence of any tag literal at or after `from`.
inline std::optional<TagHit> find_next_tag(std::string_view text, std::size_t from) {
  for (std::size_t i = from; i < text.size(); ++i) {
    if (text[i] != '<') continue;
    const std::string_view rest = text.substr(i);
    for (std::size_t k = 0; k < kTagLiterals.size(); ++k) {
      if (rest.starts_with(kTagLiterals[k])) return TagHit{i, k};
    }
  }
  return std::nullopt;
}

inline SegmentKind kind_of_literal(std::size_t literal) {
  switch (literal / 2) {
    case 0: return SegmentKind::Think;
    case 1: return SegmentKind::Search;
    case 2: return SegmentKind::Result;
    default: return SegmentKind::Answer;
  }
}

}  // namespace detail

// Parses tagged text into a validated Trajectory. Whitespace between tags is
// preserved (leading_gap / trailing_gap) so serialize() round-trips
// byte-exactly. Stray '<' inside segment text is content; only the eight tag
// literals are structural.
inline Trajectory parse_trajectory(std::string_view tagged, std::string_view query) {
  Trajectory traj;
  traj.query = std::string(query);
  std::size_t pos = 0;
  for (;;) {
    const auto hit = detail::find_next_tag(tagged, pos);
    const std::size_t gap_end = hit ? hit->pos : tagged.size();
    const std::string_view gap = tagged.substr(pos, gap_end - pos);
    if (!whitespace_only(gap)) {
      throw MalformedTagError("text outside tags near offset " + std::to_string(pos));
    }
    if (traj.segments.empty()) {
      traj.leading_gap = std::string(gap);
    } else {
      traj.segments.back().trailing_gap = std::string(gap);
    }
    if (!hit) break;
    if (hit->literal % 2 != 0) {
      throw MalformedTagError("unexpected closing tag at offset " +
                              std::to_string(hit->pos));
    }
    const SegmentKind kind = detail::kind_of_literal(hit->literal);
    const std::size_t content_start = hit->pos + kTagLiterals[hit->literal].size();
    const auto close = detail::find_next_tag(tagged, content_start);
    if (!close) {
      throw MalformedTagError("unclosed " + std::string(open_tag(kind)));
    }
    if (close->literal != hit->literal + 1) {
      throw MalformedTagError("expected " + std::string(close_tag(kind)) +
                              " before offset " + std::to_string(close->pos));
    }
    traj.segments.emplace_back(
        kind, std::string(tagged.substr(content_start, close->pos - content_start)));
    pos = close->pos + kTagLiterals[close->literal].size();
  }
  validate_segments(traj.segments);
  return traj;
}

// Inverse of parse_trajectory over the tagged text.
inline std::string serialize(const Trajectory& traj) {
  std::string out = traj.leading_gap;
  for (const Segment& seg : traj.segments) {
    out += open_tag(seg.kind);
    out += seg.text;
    out += close_tag(seg.kind);
    out += seg.trailing_gap;
  }
  return out;
}

// One completed turn as seen by a prefix state.
struct PrefixTriple {
  std::string think;
  std::string search;
  std::string result;
};

// s_t: the query plus the first t completed (think, search, result) turns.
// s_0 carries the query alone.
struct PrefixState {
  std::string query;
  std::vector<PrefixTriple> triples;

  int turns_included() const { return static_cast<int>(triples.size()); }
};

// All prefix states s_0..s_T in order. The final think and the answer are
// never part of a prefix.
inline std::vector<PrefixState> extract_prefixes(const Trajectory& traj) {
  std::vector<PrefixState> out;
  PrefixState cur;
  cur.query = traj.query;
  out.push_back(cur);
  for (std::size_t i = 0; i + 2 < traj.segments.size(); ++i) {
    const Segment& a = traj.segments[i];
    const Segment& b = traj.segments[i + 1];
    const Segment& c = traj.segments[i + 2];
    if (a.kind == SegmentKind::Think && b.kind == SegmentKind::Search &&
        c.kind == SegmentKind::Result) {
      cur.triples.push_back(PrefixTriple{a.text, b.text, c.text});
      out.push_back(cur);
    }
  }
  return out;
}

// 0-based positions into the policy-token stream (the concatenation of
// Policy-origin segment tokens in order; Result tokens are excluded).
struct SegmentMarkers {
  std::vector<int> search_ends;  // m_t: last token of the t-th search segment
  int answer_end = -1;           // m_ans: last token of the answer segment
  int stream_length = 0;
};

inline SegmentMarkers segment_markers(const Trajectory& traj) {
  SegmentMarkers m;
  int cum = 0;
  for (const Segment& seg : traj.segments) {
    if (seg.origin != Origin::Policy) continue;
    const int len = static_cast<int>(split_text(seg.text).size());
    if (seg.kind == SegmentKind::Search) m.search_ends.push_back(cum + len - 1);
    if (seg.kind == SegmentKind::Answer) m.answer_end = cum + len - 1;
    cum += len;
  }
  m.stream_length = cum;
  if (m.answer_end + 1 != m.stream_length) {
    throw ShapeMismatchError("answer segment must end the policy stream");
  }
  return m;
}

// JSONL record: one trajectory with its gold answer, optionally carrying
// externally supplied prefix answers (one per prefix state).
struct TrajectoryRecord {
  Trajectory trajectory;
  std::string gold_answer;
  std::optional<std::vector<std::string>> prefix_answers;
};

inline nlohmann::json record_to_json(const TrajectoryRecord& rec) {
  nlohmann::json segs = nlohmann::json::array();
  for (const Segment& s : rec.trajectory.segments) {
    segs.push_back({{"kind", std::string(kind_name(s.kind))},
                    {"text", s.text},
                    {"origin", s.origin == Origin::Policy ? "policy" : "environment"}});
  }
  nlohmann::json j = {{"query", rec.trajectory.query},
                      {"segments", std::move(segs)},
                      {"gold_answer", rec.gold_answer}};
  if (rec.prefix_answers) j["prefix_answers"] = *rec.prefix_answers;
  return j;
}

inline TrajectoryRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("record must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "query" && key != "segments" && key != "gold_answer" &&
        key != "prefix_answers") {
      throw ValidationError("unknown record key: " + key);
    }
  }
  if (!j.contains("query") || !j["query"].is_string()) {
    throw ValidationError("record needs a string 'query'");
  }
  if (!j.contains("gold_answer") || !j["gold_answer"].is_string()) {
    throw ValidationError("record needs a string 'gold_answer'");
  }
  if (!j.contains("segments") || !j["segments"].is_array()) {
    throw ValidationError("record needs a 'segments' array");
  }
  TrajectoryRecord rec;
  rec.trajectory.query = j["query"].get<std::string>();
  rec.gold_answer = j["gold_answer"].get<std::string>();
  for (const nlohmann::json& js : j["segments"]) {
    if (!js.is_object() || !js.contains("kind") || !js.contains("text") ||
        !js.contains("origin") || !js["kind"].is_string() || !js["text"].is_string() ||
        !js["origin"].is_string()) {
      throw ValidationError("segment needs string kind/text/origin");
    }
    const SegmentKind kind = kind_from_name(js["kind"].get<std::string>());
    Segment seg(kind, js["text"].get<std::string>());
    const std::string origin = js["origin"].get<std::string>();
    if (origin == "policy") {
      seg.origin = Origin::Policy;
    } else if (origin == "environment") {
      seg.origin = Origin::Environment;
    } else {
      throw ValidationError("unknown origin: " + origin);
    }
    rec.trajectory.segments.push_back(std::move(seg));
  }
  if (j.contains("prefix_answers")) {
    if (!j["prefix_answers"].is_array()) {
      throw ValidationError("prefix_answers must be an array of strings");
    }
    std::vector<std::string> pa;
    for (const nlohmann::json& ja : j["prefix_answers"]) {
      if (!ja.is_string()) throw ValidationError("prefix_answers must be strings");
      pa.push_back(ja.get<std::string>());
    }
    rec.prefix_answers = std::move(pa);
  }
  validate_segments(rec.trajectory.segments);
  return rec;
}

}  // namespace praise
