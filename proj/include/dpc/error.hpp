// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dpc {

// Base for all library errors. CLI maps subclasses onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shapes or image dimensions do not line up.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid layer/model/quantizer configuration.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed weights file or bitstream container.
struct FormatError : Error {
  using Error::Error;
};

// Out-of-range values in otherwise well-formed data.
struct DataError : Error {
  using Error::Error;
};

// Caller misuse (bad arguments, empty dataset, non-scalar loss).
struct UsageError : Error {
  using Error::Error;
};

}  // namespace dpc
