#include "pvx/error.hpp"

namespace pvx {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::MissingFrame: return "MissingFrame";
    case ErrorCode::CorruptImage: return "CorruptImage";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::RangeViolation: return "RangeViolation";
    case ErrorCode::UnknownFrame: return "UnknownFrame";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::MalformedBox: return "MalformedBox";
    case ErrorCode::DegenerateMask: return "DegenerateMask";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::MotionEstimationFailed: return "MotionEstimationFailed";
    case ErrorCode::AmbiguousDirection: return "AmbiguousDirection";
    case ErrorCode::NoLinesFound: return "NoLinesFound";
    case ErrorCode::TooFewLines: return "TooFewLines";
    case ErrorCode::EmptyGraph: return "EmptyGraph";
    case ErrorCode::UnknownRow: return "UnknownRow";
    case ErrorCode::SeedNotFound: return "SeedNotFound";
    case ErrorCode::RowUnmatchable: return "RowUnmatchable";
    case ErrorCode::KeyMismatch: return "KeyMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::PortInUse: return "PortInUse";
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::IrregularLayout: return "IrregularLayout";
    case ErrorCode::NoMasks: return "NoMasks";
    case ErrorCode::TrajectoryViolation: return "TrajectoryViolation";
  }
  return "Unknown";
}

}  // namespace pvx
