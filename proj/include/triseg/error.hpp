#pragma once

#include <stdexcept>
#include <string>

namespace triseg {

/// Mismatched or invalid tensor/layer geometry.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Element access outside the tensor bounds.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A NaN or Inf entered or would have left a public operation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Backward called without a matching forward, or with a stale cache.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed input files, missing masks, bad dataset layout.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace triseg
