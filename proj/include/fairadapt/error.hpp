#pragma once

#include <stdexcept>
#include <string>

namespace fairadapt {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: graph files, metadata, CSV content, argument ranges.
/// The CLI maps this to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (non-convergence, degenerate estimates).
/// The CLI maps this to exit code 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairadapt
