#pragma once

#include <stdexcept>
#include <string>

namespace crowdhg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: shape mismatch, invalid config, malformed file.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a diverging optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or version-mismatched file contents.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace crowdhg
