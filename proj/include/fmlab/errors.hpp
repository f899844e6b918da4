#pragma once

#include <stdexcept>
#include <string>

namespace fmlab {

// Base class for every failure this library raises on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/arity mismatches: non-square inputs, ragged point sets, bad indices.
struct DimensionError : Error {
  using Error::Error;
};

// Arguments outside their mathematical domain (e.g. t outside [0,1]).
struct DomainError : Error {
  using Error::Error;
};

// A matrix required to be positive-definite has a nonpositive eigenvalue.
struct DefinitenessError : Error {
  using Error::Error;
};

// An iterative routine exhausted its iteration budget without converging.
struct ConvergenceError : Error {
  using Error::Error;
};

// Non-finite values encountered mid-computation (overflow, NaN).
struct NumericError : Error {
  using Error::Error;
};

// Too few samples for the requested estimator.
struct SampleSizeError : Error {
  using Error::Error;
};

// A step size outside the stable range of the iteration it drives.
struct StabilityError : Error {
  using Error::Error;
};

// Config-file problems detected before any computation starts.
struct ValidationError : Error {
  using Error::Error;
};

// Filesystem trouble while reading configs or writing artifacts.
struct IoError : Error {
  using Error::Error;
};

}  // namespace fmlab
