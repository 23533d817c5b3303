#pragma once

#include <stdexcept>
#include <string>

namespace pfi {

// A caller broke an operation's precondition (bad shapes, out-of-range
// arguments, malformed configs).
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what)
      : std::invalid_argument(what) {}
};

// A sequence does not fit the model's maximum input length. Kept distinct
// from ContractViolation because several callers handle it specially.
class InputLengthError : public std::runtime_error {
 public:
  explicit InputLengthError(const std::string& what)
      : std::runtime_error(what) {}
};

// The upper bound is not better than the lower bound, so the PI score is
// undefined for this prompt.
class InvalidBaselineError : public std::runtime_error {
 public:
  explicit InvalidBaselineError(const std::string& what)
      : std::runtime_error(what) {}
};

// Filesystem-level failure (missing file, bad magic, truncated stream).
class FileError : public std::runtime_error {
 public:
  explicit FileError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pfi
