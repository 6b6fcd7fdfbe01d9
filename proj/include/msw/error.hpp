#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace msw {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid distribution, estimator or configuration parameter.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function (u outside (0,1), non-unit theta, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Mismatched array lengths or matrix shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Combinatorial or enumeration budget exceeded.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// No quantile/CDF backend can serve the request.
class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

/// Numerical failure; carries the tolerance that was actually achieved when one is known.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what,
                        double achieved = std::numeric_limits<double>::quiet_NaN())
      : Error(what), achieved_(achieved) {}

  double achieved_tolerance() const noexcept { return achieved_; }

 private:
  double achieved_;
};

/// Malformed experiment configuration or serialized artifact.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace msw
