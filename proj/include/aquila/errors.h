// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace aquila {

// Base for every error raised by the library. The CLI maps subclasses to
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or invalid real-valued arguments (e.g. nonpositive loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid quantization level or policy parameters.
class PolicyError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input for which the requested quantity is undefined (zero innovation).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// Output files could not be written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace aquila
