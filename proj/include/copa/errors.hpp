#pragma once

#include <stdexcept>
#include <string>

namespace copa {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File missing, unreadable or unwritable.
struct IoError : Error {
  using Error::Error;
};

// Malformed file contents (PLY header, CSV row, checkpoint container).
struct FormatError : Error {
  using Error::Error;
};

// A non-empty point cloud was required.
struct EmptyCloudError : Error {
  using Error::Error;
};

// Array/image dimensions incompatible with the operation.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration value or combination.
struct ConfigError : Error {
  using Error::Error;
};

// Operation called outside its contract (e.g. mixing two images with the
// same distortion id, contrastive loss with no eligible negatives).
struct UsageError : Error {
  using Error::Error;
};

// Dataset does not satisfy the structural requirements of a stage.
struct DatasetError : Error {
  using Error::Error;
};

// Manifest rows violating invariants (duplicate triples etc.).
struct ValidationError : Error {
  using Error::Error;
};

// Undefined numeric result (zero-vector normalization, constant-input
// correlation, divergent training loss).
struct NumericError : Error {
  using Error::Error;
};

}  // namespace copa
