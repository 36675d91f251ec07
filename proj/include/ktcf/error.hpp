#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ktcf {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Caller passed data that violates a documented precondition.
class InputError : public Error {
public:
  using Error::Error;
};

// Invalid hyperparameter or option value.
class ConfigError : public Error {
public:
  using Error::Error;
};

// The history has no originally-incorrect response that may be changed.
class NoActionableChangeError : public InputError {
public:
  using InputError::InputError;
};

// Malformed or incompatible binary/structured file.
class FormatError : public Error {
public:
  using Error::Error;
};

// Shape mismatch in a loaded model file.
class DimensionError : public FormatError {
public:
  using FormatError::FormatError;
};

// Text file parse error carrying the 1-based line number.
class ParseError : public FormatError {
public:
  ParseError(std::size_t line, const std::string &what)
      : FormatError("line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

} // namespace ktcf
