#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace pbcnn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor dimension did not match what an operation requires.
class ShapeError : public Error {
 public:
  ShapeError(std::string op, std::string dimension, std::size_t expected, std::size_t actual);

  const std::string& op() const noexcept { return op_; }
  const std::string& dimension() const noexcept { return dimension_; }
  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::string op_;
  std::string dimension_;
  std::size_t expected_;
  std::size_t actual_;
};

/// An operation was invoked in a state that does not permit it
/// (eval-mode cache passed to a backward op, stale noise sample, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset input. Row numbers are 1-based and count the header.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, const std::string& message);
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class CheckpointError : public Error {
 public:
  enum class Kind { Io, BadMagic, BadVersion, Truncated, Corrupt, ShapeMismatch };

  CheckpointError(Kind kind, const std::string& message);
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Invalid configuration value. `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message);
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A report or data file could not be opened, written or read back.
class IoError : public Error {
 public:
  IoError(std::string path, const std::string& message);
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Training produced a non-finite loss or gradient.
class NumericError : public Error {
 public:
  NumericError(std::int64_t step, std::string layer, double max_abs_grad, const std::string& message);

  std::int64_t step() const noexcept { return step_; }
  const std::string& layer() const noexcept { return layer_; }
  double max_abs_grad() const noexcept { return max_abs_grad_; }

 private:
  std::int64_t step_;
  std::string layer_;
  double max_abs_grad_;
};

}  // namespace pbcnn
