#pragma once

#include <stdexcept>
#include <string>

namespace bistnet {

// Base of every error thrown by the library. The CLI maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DTypeError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated files (BTSR, PNG, manifests, flow).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced from finite inputs, or a NaN training loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace bistnet
