#pragma once

#include <stdexcept>
#include <string>

namespace coast {

// Base for all errors thrown by the library. The CLI maps subclasses to
// exit codes: data/format problems -> 2, numerical failures -> 3.
struct CoastError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or dimension mismatch between operands.
struct DimensionError : CoastError {
  using CoastError::CoastError;
};

// API misuse (non-scalar loss, invalid setting id, seed collisions).
struct ContractError : CoastError {
  using CoastError::CoastError;
};

// Malformed file contents (bad magic, truncation, NaN payload).
struct FormatError : CoastError {
  using CoastError::CoastError;
};

// Invalid configuration values.
struct ConfigError : CoastError {
  using CoastError::CoastError;
};

// Non-finite values where finite ones are required (loss, gradients).
struct NumericalError : CoastError {
  using CoastError::CoastError;
};

}  // namespace coast
