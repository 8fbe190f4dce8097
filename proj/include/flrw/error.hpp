#pragma once

#include <stdexcept>
#include <string>

namespace flrw {

/// Failure categories reported by the simulator. The harness maps these
/// onto process exit codes.
enum class ErrorKind {
  InvalidArgument,
  NonFiniteField,
  LapseNonPositive,
  StabilityViolation,
  NoConvergence,
  NonPositivePhi,
  SingularFrame,
  InsufficientSamples,
  NonPositiveValue,
  WindowTooEarly,
  Config,
  Io,
};

inline const char *to_string(ErrorKind k) {
  switch (k) {
  case ErrorKind::InvalidArgument: return "InvalidArgument";
  case ErrorKind::NonFiniteField: return "NonFiniteField";
  case ErrorKind::LapseNonPositive: return "LapseNonPositive";
  case ErrorKind::StabilityViolation: return "StabilityViolation";
  case ErrorKind::NoConvergence: return "NoConvergence";
  case ErrorKind::NonPositivePhi: return "NonPositivePhi";
  case ErrorKind::SingularFrame: return "SingularFrame";
  case ErrorKind::InsufficientSamples: return "InsufficientSamples";
  case ErrorKind::NonPositiveValue: return "NonPositiveValue";
  case ErrorKind::WindowTooEarly: return "WindowTooEarly";
  case ErrorKind::Config: return "Config";
  case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

/// Raised by the time integrator; carries the coordinate time of the failure.
class EvolutionError : public Error {
public:
  EvolutionError(ErrorKind kind, double t, const std::string &what)
      : Error(kind, what + " (t=" + std::to_string(t) + ")"), t_(t) {}

  double time() const noexcept { return t_; }

private:
  double t_;
};

inline void require(bool cond, ErrorKind kind, const std::string &what) {
  if (!cond) throw Error(kind, what);
}

} // namespace flrw
