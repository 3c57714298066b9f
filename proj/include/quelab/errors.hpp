#pragma once

#include <stdexcept>
#include <string>

namespace quelab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A point or shape that is not admissible for the requested domain operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Mismatched dimensions or quadrature layouts.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class EmptySpectrumError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver gave up. Carries the last residual it reached.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class UnsupportedBackendError : public Error {
 public:
  using Error::Error;
};

/// Spectrum cutoff too low for the requested sum. Carries the cutoff that would suffice.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, double required_lambda_max)
      : Error(what + " (required lambda_max " + std::to_string(required_lambda_max) + ")"),
        required_(required_lambda_max) {}
  double required_lambda_max() const noexcept { return required_; }

 private:
  double required_;
};

class AssemblyError : public Error {
 public:
  using Error::Error;
};

/// Raised when a Brownian path outlives the time cap, which points at a geometry bug.
class RunawayPathError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration. `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace quelab
