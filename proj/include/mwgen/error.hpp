#pragma once

#include <stdexcept>
#include <string>

namespace mwgen {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform to the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (dataset lines, checkpoint files, overrides).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

/// A value fell outside the range accepted by a meta-word schema.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& variable, const std::string& what)
      : Error(variable + ": " + what), variable_(variable) {}

  const std::string& variable() const { return variable_; }

 private:
  std::string variable_;
};

/// Non-finite numbers encountered during training or gradient checking.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mwgen
