#pragma once

#include <array>
#include <string>
#include <string_view>
#include <variant>

#include "praise/errors.hpp"
#include "praise/trajectory.hpp"

namespace praise {

// Prompt templates are versioned constants: changing any surface below is a
// format break for checkpoints trained against the old rendering.
inline constexpr std::string_view kPromptVersion = "v1";

enum class PromptMode { Search, Answer };

inline std::string_view prompt_mode_name(PromptMode m) {
  return m == PromptMode::Search ? "search" : "answer";
}

// Every non-world word any template or scaffold can emit. build_vocabulary
// folds these in so prompts never hit the unknown id.
inline constexpr std::array<std::string_view, 19> kPromptWords = {
    "search", "task", ".", "question", ":", "answer",  "evidence", "thought",
    "searched", "found", "none", "respond", "from",    "follow",   "then",
    "?", ";", "hop", "what",
};

// Search-mode prompt: the question sits last, adjacent to generation.
inline std::string render_search_prompt(std::string_view query) {
  std::string out = "search task . question : ";
  out += query;
  return out;
}

// Answer-mode prompt over a prefix state: all and only the information in
// s_t. Evidence triples appear in turn order, then the question, then the
// answer cue.
inline std::string render_answer_prompt(const PrefixState& s) {
  std::string out = "answer task . evidence :";
  if (s.triples.empty()) {
    out += " none";
  } else {
    for (const PrefixTriple& t : s.triples) {
      out += " thought ";
      out += t.think;
      out += " . searched ";
      out += t.search;
      out += " . found ";
      out += t.result;
      out += " .";
    }
  }
  out += " question : ";
  out += s.query;
  out += " . respond :";
  return out;
}

using PromptPayload = std::variant<std::string, PrefixState>;

// Mode dispatcher: Search takes the raw query string, Answer takes a
// PrefixState. The wrong pairing raises ModeMismatchError.
inline std::string render_prompt(PromptMode mode, const PromptPayload& payload) {
  if (mode == PromptMode::Search) {
    if (const std::string* q = std::get_if<std::string>(&payload)) {
      return render_search_prompt(*q);
    }
    throw ModeMismatchError("search prompt needs a query string");
  }
  if (const PrefixState* s = std::get_if<PrefixState>(&payload)) {
    return render_answer_prompt(*s);
  }
  throw ModeMismatchError("answer prompt needs a prefix state");
}

// Fixed suffix appended when the turn budget forces the final answer. It is
// prompt context (forced tokens), never part of the trajectory text.
inline std::string render_answer_forcing_suffix(std::string_view query) {
  std::string out = " question : ";
  out += query;
  out += " . respond :";
  return out;
}

}  // namespace praise
