#pragma once

#include <stdexcept>
#include <string>

namespace ktrans {

// Error taxonomy used across the library. The CLI maps these onto exit
// codes: usage/input problems -> 2, numeric failures -> 3.

/// Bad configuration (shapes, ranges, switch combinations).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed textual input (assembly lines, JSONL records).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structurally valid file that violates a schema contract.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File system / IO failures.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values detected during model math.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg, int layer = -1)
      : std::runtime_error(msg), layer_index(layer) {}
  int layer_index;
};

}  // namespace ktrans
