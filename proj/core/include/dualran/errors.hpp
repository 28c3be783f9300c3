#pragma once

#include <stdexcept>
#include <string>

namespace dualran {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or invalid configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Integer index outside its table.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Class label outside the manifest, or an unknown label string.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// Malformed corpus record.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Malformed or mismatched checkpoint / binary container.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace dualran
