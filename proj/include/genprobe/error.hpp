#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace genprobe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad flags, bad configuration values, unsatisfiable preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input data (corpus files, vector files, lexicons).
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite losses, rank-deficient matrices, undefined correlations.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace genprobe
