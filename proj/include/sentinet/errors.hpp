#pragma once

#include <stdexcept>
#include <string>

namespace sentinet {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor or layer dimension mismatch. Message names the offending axis/layer.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid layer, solver or classifier configuration.
struct SpecError : Error {
  using Error::Error;
};

// Malformed or unreadable input data (manifests, images, weight files).
struct DataError : Error {
  using Error::Error;
};

// Non-finite values or a failed numeric invariant at runtime.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace sentinet
