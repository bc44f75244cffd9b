#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dehaze {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad scalar argument (negative beta, airlight outside [0,1], ...).
struct InvalidParameterError : Error {
  using Error::Error;
};

// Tensor/image dimension mismatch.
struct ShapeError : Error {
  using Error::Error;
};

// Empty dataset, class without training items, unusable manifest.
struct DatasetError : Error {
  using Error::Error;
};

// A hazy image assigned to a different partition than its clear source.
struct LeakageError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  using Error::Error;
};

// Non-finite loss or activation where one must not occur.
struct NumericError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace dehaze
