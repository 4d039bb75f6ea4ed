#pragma once

#include <stdexcept>
#include <string>

namespace glyconet {

// Base of every error the pipeline throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad flag, unknown class set, unsupported alpha, ...
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// A contract between two pipeline stages was violated.
class InternalError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes that do not fit together.
class ShapeError : public InternalError {
 public:
  using InternalError::InternalError;
};

// Numerical failure during training (non-finite gradients etc).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace glyconet
