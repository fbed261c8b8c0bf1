#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "praise/errors.hpp"

namespace praise {

// Tag literals in id order. Keep in sync with Vocabulary reserved ids.
inline constexpr std::array<std::string_view, 8> kTagLiterals = {
    "<think>", "</think>", "<search>", "</search>",
    "<result>", "</result>", "<answer>", "</answer>",
};

inline constexpr std::string_view kPadSurface = "<pad>";
inline constexpr std::string_view kUnkSurface = "unk";
// Reserved content word that terminates a generated segment. It is ordinary
// trainable content: it stays in segment text and in the policy-token stream.
inline constexpr std::string_view kTerminatorSurface = "done";

inline bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '_';
}

inline bool is_space_char(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// If text at pos starts with a tag literal or <pad>, return its length, else 0.
inline std::size_t atomic_prefix_len(std::string_view text, std::size_t pos) {
  if (text[pos] != '<') return 0;
  const std::string_view rest = text.substr(pos);
  for (const std::string_view tag : kTagLiterals) {
    if (rest.starts_with(tag)) return tag.size();
  }
  if (rest.starts_with(kPadSurface)) return kPadSurface.size();
  return 0;
}

// Deterministic splitter shared by every component. Rules, in order:
// tag literals and <pad> are atomic; runs of [A-Za-z0-9_] are one token;
// whitespace separates; any other byte is a single-character token.
inline std::vector<std::string> split_text(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (is_space_char(c)) {
      ++i;
      continue;
    }
    if (const std::size_t n = atomic_prefix_len(text, i); n > 0) {
      out.emplace_back(text.substr(i, n));
      i += n;
      continue;
    }
    if (is_word_char(c)) {
      std::size_t j = i + 1;
      while (j < text.size() && is_word_char(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
      continue;
    }
    out.emplace_back(1, c);
    ++i;
  }
  return out;
}

// Canonical surface form: single-space join. split_text(join_tokens(t)) == t
// for any tokens produced by split_text.
inline std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

// Closed vocabulary over a world: reserved ids first, then content words in
// the order given. Reserved layout is part of the checkpoint contract.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kFirstTagId = 2;  // tags occupy ids 2..9 in kTagLiterals order
  static constexpr int kTerminatorId = 10;
  static constexpr int kFirstContentId = 11;

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  explicit Vocabulary(std::vector<std::string> content_words) {
    surfaces_.emplace_back(kPadSurface);
    surfaces_.emplace_back(kUnkSurface);
    for (const std::string_view tag : kTagLiterals) surfaces_.emplace_back(tag);
    surfaces_.emplace_back(kTerminatorSurface);
    for (std::string& w : content_words) {
      if (lookup_.count(w) || w == kPadSurface || w == kUnkSurface ||
          w == kTerminatorSurface) {
        continue;  // duplicates collapse; reserved surfaces keep their ids
      }
      bool tag = false;
      for (const std::string_view t : kTagLiterals) tag = tag || (w == t);
      if (tag) continue;
      lookup_.emplace(w, static_cast<int>(surfaces_.size()));
      surfaces_.push_back(std::move(w));
    }
    for (int id = 0; id < static_cast<int>(surfaces_.size()); ++id) {
      lookup_.emplace(surfaces_[static_cast<std::size_t>(id)], id);
    }
  }

  int size() const { return static_cast<int>(surfaces_.size()); }

  int id_of(std::string_view surface) const {
    const auto it = lookup_.find(std::string(surface));
    return it == lookup_.end() ? kUnkId : it->second;
  }

  const std::string& surface_of(int id) const {
    if (id < 0 || id >= size()) throw ShapeMismatchError("token id out of range");
    return surfaces_[static_cast<std::size_t>(id)];
  }

  bool is_tag(int id) const { return id >= kFirstTagId && id < kFirstTagId + 8; }

  // Structural ids may never appear inside segment content.
  bool is_structural(int id) const {
    return id == kPadId || id == kUnkId || is_tag(id);
  }

  int tag_id(std::string_view literal) const {
    for (int k = 0; k < 8; ++k) {
      if (kTagLiterals[static_cast<std::size_t>(k)] == literal) return kFirstTagId + k;
    }
    throw ShapeMismatchError("unknown tag literal");
  }

  std::vector<int> encode(std::string_view text) const {
    std::vector<int> ids;
    for (const std::string& tok : split_text(text)) ids.push_back(id_of(tok));
    return ids;
  }

  std::string decode(std::span<const int> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i > 0) out.push_back(' ');
      out += surface_of(ids[i]);
    }
    return out;
  }

 private:
  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, int> lookup_;
};

// Drop one trailing terminator word from a canonical text. The terminator is
// generation plumbing; semantic consumers (answer scoring, search queries)
// read the stripped form.
inline std::string strip_terminator(std::string_view text) {
  std::vector<std::string> toks = split_text(text);
  if (!toks.empty() && toks.back() == kTerminatorSurface) toks.pop_back();
  return join_tokens(toks);
}

}  // namespace praise
