#pragma once

#include <stdexcept>
#include <string>

namespace dang {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape / rank / channel violations.
struct DimensionError : Error {
  using Error::Error;
};

// Math domain violations (log of non-positive value, degenerate PCA input).
struct DomainError : Error {
  using Error::Error;
};

// Bad configuration (unknown keys, invalid values). CLI exit code 1.
struct ConfigError : Error {
  using Error::Error;
};

// Dataset / file problems (missing files, parse errors, corrupt checkpoints).
// CLI exit code 2.
struct DataError : Error {
  using Error::Error;
};

// Non-finite losses or gradients during optimization. CLI exit code 3.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace dang
