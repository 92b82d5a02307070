#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pvx {

// Every failure the core can raise. The C API maps these onto pvx_status.
enum class ErrorCode {
  InvalidArgument,
  Io,
  MissingFrame,
  CorruptImage,
  MalformedRow,
  RangeViolation,
  UnknownFrame,
  ShapeMismatch,
  EmptyMask,
  MalformedBox,
  DegenerateMask,
  DegenerateConfiguration,
  MotionEstimationFailed,
  AmbiguousDirection,
  NoLinesFound,
  TooFewLines,
  EmptyGraph,
  UnknownRow,
  SeedNotFound,
  RowUnmatchable,
  KeyMismatch,
  InvalidConfig,
  OutOfRange,
  PortInUse,
  Parse,
  IrregularLayout,
  NoMasks,
  TrajectoryViolation,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace pvx
