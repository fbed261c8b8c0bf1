#pragma once

#include <stdexcept>
#include <string>

namespace praise {

// Base for every error thrown by this library. Catching praise::Error is
// enough to separate library failures from std exceptions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A tag literal is unknown, unclosed, nested, or appears where no tag may be.
class MalformedTagError final : public Error {
 public:
  using Error::Error;
};

// Tags are well formed but the segment sequence breaks the
// (Think Search Result)* Think Answer grammar, or a segment is empty.
class GrammarViolationError final : public Error {
 public:
  using Error::Error;
};

// The segment sequence is a valid proper prefix of the grammar but the
// trajectory ends without an Answer segment.
class MissingAnswerError final : public Error {
 public:
  using Error::Error;
};

// A prompt payload does not match the requested prompt mode.
class ModeMismatchError final : public Error {
 public:
  using Error::Error;
};

// Two sequences that must be index-aligned have different lengths.
class LengthMismatchError final : public Error {
 public:
  using Error::Error;
};

// Process-reward scaling requires alpha >= 0.
class NegativeAlphaError final : public Error {
 public:
  using Error::Error;
};

// Marker count and process-reward count disagree (|m| must equal T).
class MarkerMismatchError final : public Error {
 public:
  using Error::Error;
};

// Requested world counts cannot be satisfied (e.g. more distinct facts than
// n_entities^2 * n_relations).
class InfeasibleCountsError final : public Error {
 public:
  using Error::Error;
};

// No chain of the requested hop count exists in the knowledge base under the
// task constraints (functional steps, distinct entities, ambiguous tail).
class NoChainAvailableError final : public Error {
 public:
  using Error::Error;
};

// Tensor-ish shape disagreement inside the network or optimizer.
class ShapeMismatchError final : public Error {
 public:
  using Error::Error;
};

// Declared for interface completeness: a generator that can make no progress.
// Unreachable under scaffolded decoding, where budget exhaustion truncates
// the segment instead of stalling.
class GenerationStalledError final : public Error {
 public:
  using Error::Error;
};

// Config or input validation failure (unknown key, bad value, bad schema).
class ValidationError final : public Error {
 public:
  using Error::Error;
};

// Filesystem or stream failure while reading or writing an artifact.
class IoError final : public Error {
 public:
  using Error::Error;
};

}  // namespace praise
