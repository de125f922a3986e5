#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace cape {

// Root of every error the library throws. The CLI maps the subclasses onto
// exit codes (config 2, numeric 3, I/O 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class IterationLimit : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Raised when a Cholesky pivot is not strictly positive. Carries the pivot
/// index and, when thrown from inside a solver, the iteration that produced
/// the indefinite matrix.
class NotPositiveDefinite : public NumericError {
 public:
  NotPositiveDefinite(std::size_t pivot, const std::string& what)
      : NumericError(what), pivot_(pivot) {}
  NotPositiveDefinite(std::size_t pivot, std::size_t iteration, const std::string& what)
      : NumericError(what), pivot_(pivot), iteration_(iteration) {}

  std::size_t pivot() const noexcept { return pivot_; }
  std::optional<std::size_t> iteration() const noexcept { return iteration_; }

 private:
  std::size_t pivot_;
  std::optional<std::size_t> iteration_;
};

}  // namespace cape
