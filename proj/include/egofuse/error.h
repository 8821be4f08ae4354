#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace egofuse {

enum class ErrorCode {
  InvalidArgument,
  OutOfRange,
  DimensionMismatch,
  ParseError,
  InvariantViolation,
  Io,
  DegenerateDesign,
  NonPositiveHeight,
  DegenerateMotion,
  InsufficientOverlap,
  FrameMisalignment,
  NegativeVelocity,
  AmbiguousMatch,
  EmptyInput,
};

std::string_view errorCodeName(ErrorCode code);

// All recoverable failures in the library are reported through this type.
// Soft failures (non-convergence, insufficient views) are flagged in result
// structs instead.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(errorCodeName(code)) + ": " + message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept {
    return code_;
  }

 private:
  ErrorCode code_;
};

#define EGOFUSE_CHECK(cond, code, msg)       \
  do {                                       \
    if (!(cond)) {                           \
      throw ::egofuse::Error((code), (msg)); \
    }                                        \
  } while (0)

} // namespace egofuse
