#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rfrk {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownSchemeError : public Error {
 public:
  explicit UnknownSchemeError(const std::string& name)
      : Error("unknown scheme '" + name + "'") {}
};

class LengthMismatchError : public Error {
 public:
  LengthMismatchError(std::size_t lhs, std::size_t rhs)
      : Error("length mismatch: " + std::to_string(lhs) + " vs " +
              std::to_string(rhs)) {}
};

class KVectorError : public Error {
 public:
  enum class Kind { wrong_length, sum_nonzero, degenerate };

  KVectorError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// A right-hand side evaluation or a step update produced inf/nan.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// The RF quadratic has no real root (negative discriminant).
class NoRealRootError : public Error {
 public:
  explicit NoRealRootError(double discriminant)
      : Error("no real epsilon: discriminant " + std::to_string(discriminant)),
        discriminant_(discriminant) {}

  double discriminant() const { return discriminant_; }

 private:
  double discriminant_;
};

/// The relaxation parameter collapsed towards zero.
class StalledRelaxationError : public Error {
 public:
  explicit StalledRelaxationError(double gamma)
      : Error("relaxation stalled: gamma " + std::to_string(gamma)),
        gamma_(gamma) {}

  double gamma() const { return gamma_; }

 private:
  double gamma_;
};

class NoStableIntervalError : public Error {
 public:
  using Error::Error;
};

class SingularVectorError : public Error {
 public:
  using Error::Error;
};

/// Wraps a step failure with the position in the run where it happened.
class IntegrationError : public Error {
 public:
  enum class Cause { non_finite, no_real_root, stalled_relaxation, other };

  IntegrationError(std::size_t step, double time, Cause cause, const std::string& reason)
      : Error("step " + std::to_string(step) + " at t=" + std::to_string(time) + ": " +
              reason),
        step_(step),
        time_(time),
        cause_(cause),
        reason_(reason) {}

  std::size_t step() const { return step_; }
  double time() const { return time_; }
  Cause cause() const { return cause_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t step_;
  double time_;
  Cause cause_;
  std::string reason_;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace rfrk
