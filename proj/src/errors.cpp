#include "vislio/errors.hpp"

namespace vislio {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInterval: return "EmptyInterval";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::NonPositiveDt: return "NonPositiveDt";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::MotionGap: return "MotionGap";
    case ErrorCode::TooSparse: return "TooSparse";
    case ErrorCode::DegenerateLine: return "DegenerateLine";
    case ErrorCode::DegeneratePlane: return "DegeneratePlane";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::MatchFailed: return "MatchFailed";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::ClockSkew: return "ClockSkew";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace vislio
