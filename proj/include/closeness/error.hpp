#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace closeness {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or argument check failed.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A simulated state left the overflow guard or became non-finite.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Adaptive step size collapsed below the representable resolution.
class StiffnessError : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// Input carries no usable geometry (coincident points, zero denominators).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A hypothesis of the linear stable-embedding bound does not hold.
class HypothesisViolation : public Error {
 public:
  using Error::Error;
};

class ResonanceError : public Error {
 public:
  using Error::Error;
};

/// The certificate threshold u/l is undefined because l <= 0.
class ThresholdUndefined : public Error {
 public:
  using Error::Error;
};

/// Malformed experiment configuration; carries the offending field path.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace closeness
