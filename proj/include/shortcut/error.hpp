#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace shortcut {

enum class ErrorCode {
  kInvalidSpec,
  kDegenerateColumn,
  kIoError,
  kParseError,
  kDimensionMismatch,
  kNonPositiveFloor,
  kSingularConceptGram,
  kSingularSystem,
  kDivergenceDetected,
  kConfigError,
  kNegativeThreshold,
  kZeroDeltaC,
  kEyeSingularDeltaU,
  kMissingCausalLambdas,
  kEmptyGrid,
  kIndexOutOfRange,
  kLengthMismatch,
  kEmpty,
  kSingleClass,
  kInconsistentDims,
  kInvalidDims,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kDegenerateColumn: return "DegenerateColumn";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonPositiveFloor: return "NonPositiveFloor";
    case ErrorCode::kSingularConceptGram: return "SingularConceptGram";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kDivergenceDetected: return "DivergenceDetected";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kNegativeThreshold: return "NegativeThreshold";
    case ErrorCode::kZeroDeltaC: return "ZeroDeltaC";
    case ErrorCode::kEyeSingularDeltaU: return "EyeSingularDeltaU";
    case ErrorCode::kMissingCausalLambdas: return "MissingCausalLambdas";
    case ErrorCode::kEmptyGrid: return "EmptyGrid";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmpty: return "Empty";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kInconsistentDims: return "InconsistentDims";
    case ErrorCode::kInvalidDims: return "InvalidDims";
  }
  return "Unknown";
}

/// Every failure in the library surfaces as this exception; `code()` names
/// the failure class so callers can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace shortcut
