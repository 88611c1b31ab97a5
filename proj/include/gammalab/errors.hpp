#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gammalab {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A field or matrix whose size does not match the triple it is used with.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// An argument outside the domain of an operation (negative time, p outside [0,1], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A violated structural invariant of a Markov triple. `invariant()` is a stable
// short name such as "detailed balance" or "measure normalization".
class InvariantViolation : public Error {
 public:
  InvariantViolation(std::string invariant, const std::string& detail)
      : Error(invariant + ": " + detail), invariant_(std::move(invariant)) {}

  const std::string& invariant() const noexcept { return invariant_; }

 private:
  std::string invariant_;
};

class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, std::size_t column, const std::string& detail)
      : Error(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + detail),
        line_(line),
        column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// An experiment configuration that parses but cannot be run as written, for
// example an assertion requested on a space where it is not meaningful.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Eigensolver failure, kernel clipping beyond roundoff, non-finite results.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace gammalab
