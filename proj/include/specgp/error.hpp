#pragma once

#include <stdexcept>
#include <string>

namespace specgp {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad shapes, out-of-range indices, malformed arguments.
struct InputError : Error {
  using Error::Error;
};

struct UnsupportedFamilyError : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at offset " + std::to_string(position) + ")"), pos(position) {}
  std::size_t pos;
};

struct NotPositiveDefiniteError : Error {
  NotPositiveDefiniteError(const std::string& what, double jitter)
      : Error(what + " (last jitter " + std::to_string(jitter) + ")"), last_jitter(jitter) {}
  double last_jitter;
};

struct DataError : Error {
  using Error::Error;
};

struct MissingDatasetError : DataError {
  using DataError::DataError;
};

struct MetricError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

// A model could not be fitted even after the optimiser's penalties.
struct NumericalError : Error {
  using Error::Error;
};

}  // namespace specgp
