#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace monofb {

enum class ErrorCode {
  // text and grammar
  IllegalCharacter,
  UnbalancedParen,
  UnexpectedToken,
  UnknownFunction,
  WrongArity,
  Syntax,
  // model validation
  UnboundVariable,
  DimensionMismatch,
  Validation,
  EmptyInput,
  // numerics
  EvalDomainError,
  IntegrationFailure,
  StepUnderflow,
  Diverged,
  SingularJacobian,
  NoConvergence,
  SingularA,
  MarginCase,
  PairNotPeriodTwo,
};

/// Coarse grouping used for CLI exit codes.
enum class ErrorCategory { Parse, Validation, Numerical };

inline ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::IllegalCharacter:
    case ErrorCode::UnbalancedParen:
    case ErrorCode::UnexpectedToken:
    case ErrorCode::UnknownFunction:
    case ErrorCode::WrongArity:
    case ErrorCode::Syntax:
      return ErrorCategory::Parse;
    case ErrorCode::UnboundVariable:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::Validation:
    case ErrorCode::EmptyInput:
      return ErrorCategory::Validation;
    default:
      return ErrorCategory::Numerical;
  }
}

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IllegalCharacter: return "IllegalCharacter";
    case ErrorCode::UnbalancedParen: return "UnbalancedParen";
    case ErrorCode::UnexpectedToken: return "UnexpectedToken";
    case ErrorCode::UnknownFunction: return "UnknownFunction";
    case ErrorCode::WrongArity: return "WrongArity";
    case ErrorCode::Syntax: return "Syntax";
    case ErrorCode::UnboundVariable: return "UnboundVariable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::Validation: return "Validation";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EvalDomainError: return "EvalDomainError";
    case ErrorCode::IntegrationFailure: return "IntegrationFailure";
    case ErrorCode::StepUnderflow: return "StepUnderflow";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularA: return "SingularA";
    case ErrorCode::MarginCase: return "MarginCase";
    case ErrorCode::PairNotPeriodTwo: return "PairNotPeriodTwo";
  }
  return "Unknown";
}

/// The single exception type thrown by the library. `offset` is a byte
/// offset into the expression source, `line` a 1-based line of a model file.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> offset = std::nullopt,
        std::optional<std::size_t> line = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        offset_(offset),
        line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }
  std::optional<std::size_t> offset() const noexcept { return offset_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> offset_;
  std::optional<std::size_t> line_;
};

}  // namespace monofb
