#pragma once

#include <stdexcept>
#include <string>

namespace afreeqc {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The symbol rank at some direction disagrees with the operator's rank.
class ConstantRankViolation : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped before reaching its tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// The requested accuracy is out of reach at the current grid resolution.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

class ScaleLimitError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class SupportError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace afreeqc
