#pragma once

#include <stdexcept>
#include <string>

namespace ensr {

/// Base of every error raised by the library. The CLI maps each subclass to
/// its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or sizes that do not fit an operation's preconditions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Missing, partial or malformed input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration (bad option, wrong checkpoint).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. calling an operation on input it does not accept.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A numerical failure during training (NaN/Inf in a loss or gradient).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ensr
