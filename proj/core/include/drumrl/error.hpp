#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace drumrl {

// Invalid argument or out-of-range input to a library operation.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation called in a state that does not allow it (e.g. stepping a
// finished episode).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Numerical failure during optimisation: NaN loss, non-finite gradients.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Model or checkpoint file that cannot be loaded.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File or directory that cannot be opened, created or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A trained artifact fell below its required quality threshold.
class QualityGateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input. line() is 1-based; 0 means "whole file".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line,
             const std::string& message)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " +
                           message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace drumrl
