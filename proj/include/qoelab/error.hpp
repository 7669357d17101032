#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qoelab {

// Invalid argument or out-of-range numeric input.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Model cannot be fit with the requested number of states.
class DegenerateModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input. Carries the 1-based line number of the offending row.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that breaks a data invariant (e.g. non-monotone epochs).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command-line usage or configuration.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qoelab
