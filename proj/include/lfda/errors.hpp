#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lfda {

/// Invalid shapes, counts or configuration values.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Evaluation points outside a basis domain or kernel support.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A model state that violates its invariants (non-positive variance, ...).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unrecoverable numerical failure inside a Markov chain.
class ChainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `line` is 1-based, 0 when not applicable.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Draw container written by an incompatible format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Draws fitted to a dataset other than the one supplied.
class DatasetMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system failure (open, write, rename).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lfda
