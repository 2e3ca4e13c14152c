#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedtad {

/// Base for every structured error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

/// Dataset parse/validation failure; carries the offending file and 1-based line (0 = whole file).
class DatasetError : public Error {
 public:
  enum class Kind { missing_file, count_mismatch, malformed_row, invalid_value };

  DatasetError(Kind kind, std::string file, std::size_t line, const std::string& what)
      : Error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        kind_(kind),
        file_(std::move(file)),
        line_(line) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::string file_;
  std::size_t line_;
};

class PartitionError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced by a forward op or a loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedtad
