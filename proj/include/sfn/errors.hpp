#pragma once

#include <stdexcept>
#include <string>

namespace sfn {

enum class ErrorKind {
  argument,
  dimension,
  config,
  io,
  degenerate,
  empty_class,
  saturation,
};

/// Base of every error raised by the library. The kind selects the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ArgumentError : Error {
  explicit ArgumentError(const std::string& w) : Error(ErrorKind::argument, w) {}
};
struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorKind::dimension, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::config, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::io, w) {}
};
struct DegenerateError : Error {
  explicit DegenerateError(const std::string& w) : Error(ErrorKind::degenerate, w) {}
};
struct EmptyClassError : Error {
  explicit EmptyClassError(const std::string& w) : Error(ErrorKind::empty_class, w) {}
};
struct SaturationError : Error {
  explicit SaturationError(const std::string& w) : Error(ErrorKind::saturation, w) {}
};

/// 0 success, 2 configuration/input, 3 numerical degeneracy, 4 saturation.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::argument:
    case ErrorKind::dimension:
    case ErrorKind::config:
    case ErrorKind::io:
      return 2;
    case ErrorKind::degenerate:
    case ErrorKind::empty_class:
      return 3;
    case ErrorKind::saturation:
      return 4;
  }
  return 1;
}

}  // namespace sfn
