#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bbr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class DisjointnessError : public Error {
 public:
  using Error::Error;
};

class RoleMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Raised when a training loop meets a non-finite loss or gradient.
/// `step` is the optimizer step (classifier) or epoch (VAE) at which it happened.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::uint64_t step)
      : Error(what + " (at step " + std::to_string(step) + ")"), step_(step) {}

  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

/// Configuration problems. `line` is 0 when the error is not tied to a line.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class StageOrderError : public Error {
 public:
  using Error::Error;
};

}  // namespace bbr
