#pragma once

#include <stdexcept>
#include <string>

namespace meissner {

// Base of every domain error thrown by the library. CLI exit codes are
// assigned from the concrete type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Evaluation point lies on (or within 1 nm of) a current filament.
class SingularityError : public Error {
 public:
  using Error::Error;
};

class StepTooLargeError : public Error {
 public:
  using Error::Error;
};

class NoMinimumError : public Error {
 public:
  using Error::Error;
};

class SaddlePointError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class FewerDipsError : public FitError {
 public:
  using FitError::FitError;
};

class NoSolutionError : public Error {
 public:
  using Error::Error;
};

class UnderdeterminedError : public Error {
 public:
  using Error::Error;
};

class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

class NoOscillationError : public Error {
 public:
  using Error::Error;
};

class UndersamplingError : public Error {
 public:
  using Error::Error;
};

class TooShortError : public Error {
 public:
  using Error::Error;
};

class EmptyRoiError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace meissner
