#pragma once

#include <stdexcept>
#include <string>

namespace mssl {

/// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing, malformed or inconsistent data (files, manifests, shapes).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Dimension disagreement between tensors or against model parameters.
class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values in a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mssl
