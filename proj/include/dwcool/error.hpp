#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dwcool {

enum class ErrorKind {
  InvalidArgument,
  NonDoubleWell,
  ConvergenceFailure,
  BasisTooSmall,
  RootBracketFailure,
  QuadratureNonConvergence,
  ImaginaryFrequency,
  NonPositiveFrequency,
  DimensionMismatch,
  DimensionOverflow,
  SingularAssembly,
  NonConvergence,
  StepUnderflow,
  BudgetExhausted,
  NoBracket,
  ResonantDenominator,
  FitDegenerate,
  FrequencyMismatch,
  ConfigError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NonDoubleWell: return "NonDoubleWell";
    case ErrorKind::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorKind::BasisTooSmall: return "BasisTooSmall";
    case ErrorKind::RootBracketFailure: return "RootBracketFailure";
    case ErrorKind::QuadratureNonConvergence: return "QuadratureNonConvergence";
    case ErrorKind::ImaginaryFrequency: return "ImaginaryFrequency";
    case ErrorKind::NonPositiveFrequency: return "NonPositiveFrequency";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::DimensionOverflow: return "DimensionOverflow";
    case ErrorKind::SingularAssembly: return "SingularAssembly";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::StepUnderflow: return "StepUnderflow";
    case ErrorKind::BudgetExhausted: return "BudgetExhausted";
    case ErrorKind::NoBracket: return "NoBracket";
    case ErrorKind::ResonantDenominator: return "ResonantDenominator";
    case ErrorKind::FitDegenerate: return "FitDegenerate";
    case ErrorKind::FrequencyMismatch: return "FrequencyMismatch";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace dwcool
