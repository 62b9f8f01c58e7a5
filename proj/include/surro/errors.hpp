#pragma once

#include <stdexcept>
#include <string>

namespace surro {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch, out-of-range argument, or otherwise malformed input.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A covariance matrix could not be factorised, even after jitter escalation.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// Conditioning on a batch that duplicates a noiseless design point.
class DegenerateUpdateError : public Error {
 public:
  using Error::Error;
};

class FittingError : public Error {
 public:
  using Error::Error;
};

class UnsupportedKernelError : public Error {
 public:
  using Error::Error;
};

class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// Sample covariance of simulated summaries stayed singular after jitter.
class SingularCovarianceError : public Error {
 public:
  using Error::Error;
};

/// The unnormalised density vanished (or was non-finite) everywhere it was evaluated.
class DegenerateEstimateError : public Error {
 public:
  using Error::Error;
};

class InitializationError : public Error {
 public:
  using Error::Error;
};

/// Bad experiment configuration; the message names the offending key path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace surro
