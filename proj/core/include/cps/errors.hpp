#pragma once

#include <stdexcept>
#include <string>

namespace cps {

// Every failure raised by the library derives from Error so callers (the CLI in
// particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or parameter layout disagreement.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or a mathematically undefined input (zero-norm vector, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Training loss became non-finite.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, int epoch, int index)
      : NumericError(what), epoch_(epoch), index_(index) {}
  int epoch() const noexcept { return epoch_; }
  /// Endpoint or task index, -1 when not applicable.
  int index() const noexcept { return index_; }

 private:
  int epoch_;
  int index_;
};

/// Malformed files, out-of-range labels, incompatible datasets.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid arguments or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cps
