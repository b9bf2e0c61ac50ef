#pragma once

#include <stdexcept>
#include <string>

namespace vislio {

enum class ErrorCode {
  EmptyInterval,
  NonMonotonicTime,
  NonPositiveDt,
  EmptyCloud,
  DimensionMismatch,
  IdOutOfRange,
  MotionGap,
  TooSparse,
  DegenerateLine,
  DegeneratePlane,
  EmptyIndex,
  InsufficientCorrespondences,
  SingularNormalEquations,
  EmptyWindow,
  MatchFailed,
  FormatError,
  ClockSkew,
  NoOverlap,
  ZeroBaseline,
  IoFailure,
  InvalidArgument,
};

const char* to_string(ErrorCode code);

// All recoverable failures in the library are reported through this type; the
// code lets callers branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace vislio
