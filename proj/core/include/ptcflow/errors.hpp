#pragma once

#include <stdexcept>
#include <string>

namespace ptcflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A caller passed a value outside an operation's domain (non-finite phase, bad bitwidth, ...).
class InvalidInput : public Error {
  public:
    using Error::Error;
};

/// Reck elimination was asked to factor a matrix that is not orthogonal.
class DecompositionFailure : public Error {
  public:
    DecompositionFailure(const std::string &what, double residual) : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

  private:
    double residual_;
};

/// Inconsistent configuration: mismatched dimensions, densities outside (0,1], unknown enum names.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Tensor or matrix shapes that do not line up.
class ShapeError : public Error {
  public:
    using Error::Error;
};

/// A stage precondition failed (e.g. degenerate Sigma before identity calibration).
class PreconditionError : public Error {
  public:
    using Error::Error;
};

/// Training or optimization produced a non-finite value.
class NumericalAbort : public Error {
  public:
    using Error::Error;
};

/// A data file did not match its declared format.
class FormatError : public Error {
  public:
    FormatError(const std::string &what, std::size_t offset) : Error(what), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

  private:
    std::size_t offset_;
};

}  // namespace ptcflow
