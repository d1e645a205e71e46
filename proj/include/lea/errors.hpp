#pragma once

#include <stdexcept>
#include <string>

namespace lea {

/// Bad arguments, malformed files, shape mismatches. Maps to CLI exit code 2.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical or algorithmic failure (divergence, degenerate solution,
/// unsuccessful mapping used where success is required).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lea
