#pragma once

#include <stdexcept>
#include <string>

namespace mvkd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Bad configuration value or config/dataset mismatch.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input data (labels, masks, dataset files).
class DataError : public Error {
 public:
  using Error::Error;
};

// Violated precondition of an API call.
class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

// Non-finite values during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Command-line misuse.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvkd
