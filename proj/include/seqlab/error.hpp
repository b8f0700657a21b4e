#pragma once

#include <stdexcept>
#include <string>

namespace seqlab {

// Invalid argument or state for a mathematical operation (S > n, kappa <= 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// User-facing configuration problems. The CLI maps these to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Bisection bracket blowup, grid leakage and similar numerical failures.
// The CLI maps these to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files; carries the offending 1-based line number.
class ParseError : public ConfigError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : ConfigError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace seqlab
