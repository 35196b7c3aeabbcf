#pragma once

#include <stdexcept>
#include <string>

namespace ctsparse {

// Base for everything thrown by this library. The CLI maps the subclasses to
// exit codes, tests match on them, and everything carries a plain message.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user-supplied parameters: phantom specs, run configs, network configs.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed file contents: bad magic, truncation, duplicate container entries.
struct FormatError : Error {
  using Error::Error;
};

// Scan geometry violations: detector/image mismatch, empty or unsorted angles.
struct GeometryError : Error {
  using Error::Error;
};

// Tensor/array shape violations: rank, divisibility, dimension mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// View-subsampling violations (non-divisor view targets and the like).
struct SamplingError : Error {
  using Error::Error;
};

// Angle-interpolation violations (too few views, uncovered target angles).
struct InterpolationError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required, diverging solvers.
struct NumericalError : Error {
  using Error::Error;
};

// API misuse: backward on a non-scalar, optimizer step without gradients.
struct UsageError : Error {
  using Error::Error;
};

// Missing or unreadable/unwritable files.
struct IoError : Error {
  using Error::Error;
};

}  // namespace ctsparse
