#pragma once

#include <stdexcept>
#include <string>

namespace cdpf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: bad dimensions, nonpositive parameters, malformed grids.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Diffusion matrix that is not symmetric positive definite at some time.
class DiffusionSpecError : public Error {
 public:
  DiffusionSpecError(const std::string& what, double t) : Error(what), time_(t) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Non-finite values produced while integrating an SDE/ODE or a likelihood ratio.
class IntegrationError : public Error {
 public:
  using Error::Error;
};

/// Singular or badly conditioned matrix that has to be inverted.
class MatrixInversionError : public Error {
 public:
  MatrixInversionError(const std::string& what, double t) : Error(what), time_(t) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// Every particle has zero weight.
class DegeneracyError : public Error {
 public:
  DegeneracyError(const std::string& what, int step) : Error(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace cdpf
