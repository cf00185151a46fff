#pragma once

#include <stdexcept>
#include <string>

namespace uniprompt {

// Shape or dimension mismatch between tensors / sequences.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite value detected at an op boundary, or a numeric precondition broke.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data (JSONL, vocab files, checkpoints).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid experiment or model configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A template cache was used with weights it was not built for.
class CacheError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rows of one report table were produced under inconsistent conditions.
class ParityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace uniprompt
