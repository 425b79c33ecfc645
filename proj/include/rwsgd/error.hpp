#pragma once

#include <stdexcept>
#include <string>

namespace rwsgd {

// Each error family maps onto one CLI exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration: bad schedule, unknown model, malformed config file.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Problems with the observation stream itself.
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// Divergence, non-finite values, singular matrices.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// The model has no Hessian, so the sandwich estimator cannot be formed.
class PlugInUnavailable : public Error {
 public:
  PlugInUnavailable()
      : Error("plug-in covariance unavailable: model has no Hessian") {}
  int exit_code() const noexcept override { return 2; }
};

}  // namespace rwsgd
