#pragma once

#include <stdexcept>
#include <string>

namespace wxa {

/// Base of every error raised by the library. `exit_code()` is the process
/// status the CLI maps it to.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual int exit_code() const noexcept { return 1; }
};

/// Bad arguments, bad configuration, violated preconditions.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Tensor or map dimensions that do not line up.
class ShapeError : public UsageError {
 public:
  using UsageError::UsageError;
};

/// NaN/Inf detected in a value that must be finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Training loss left the sane range.
class DivergenceError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] int exit_code() const noexcept override { return 2; }
};

class IoError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] int exit_code() const noexcept override { return 3; }
};

}  // namespace wxa
