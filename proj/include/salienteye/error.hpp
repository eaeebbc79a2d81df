#pragma once

#include <stdexcept>
#include <string>

namespace salienteye {

// Error categories map 1:1 onto the CLI exit-code contract:
//   ValidationError -> 2, DataError -> 3, ModelError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unreadable input (manifests, images, configs).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Structurally valid input that is insufficient for the requested task
// (single-class training data, too few reference photos, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// Backbone / persisted-artifact problems (missing model, unknown layer,
// dimension mismatch between artifacts).
class ModelError : public Error {
 public:
  using Error::Error;
};

}  // namespace salienteye
