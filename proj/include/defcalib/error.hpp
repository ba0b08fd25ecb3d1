#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace defcalib {

enum class ErrorCode {
  InvalidArgument,
  OutOfRange,
  BehindCamera,
  NonConvergence,
  MissingParameters,
  DegenerateConfiguration,
  InsufficientData,
  IllConditioned,
  Cheirality,
  RankDeficient,
  Divergence,
  SamplingFailure,
  Schema,
  Io,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this exception. `frame` carries
// the frame index for errors that can be attributed to a single frame.
class CalibError : public std::runtime_error {
 public:
  CalibError(ErrorCode code, const std::string& message,
             std::optional<int> frame = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<int> frame() const noexcept { return frame_; }

  // True for failures of the numerical pipeline, as opposed to bad input.
  bool is_numerical() const noexcept;

 private:
  ErrorCode code_;
  std::optional<int> frame_;
};

}  // namespace defcalib
