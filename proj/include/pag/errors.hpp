#pragma once

#include <stdexcept>
#include <string>

namespace pag {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid or inconsistent user configuration.
struct ConfigError : Error {
  using Error::Error;
};

// A required input file is missing or unreadable.
struct DataError : Error {
  using Error::Error;
};

// An input file exists but its contents are malformed or truncated.
struct CorruptDataError : Error {
  using Error::Error;
};

// Tensor/batch shape does not match what an operation expects.
struct ShapeError : Error {
  using Error::Error;
};

// Operation not supported for the given architecture or conversion.
struct UnsupportedError : Error {
  using Error::Error;
};

}  // namespace pag
