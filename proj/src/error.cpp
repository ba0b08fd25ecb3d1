#include "defcalib/error.hpp"

namespace defcalib {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::OutOfRange: return "out_of_range";
    case ErrorCode::BehindCamera: return "behind_camera";
    case ErrorCode::NonConvergence: return "non_convergence";
    case ErrorCode::MissingParameters: return "missing_parameters";
    case ErrorCode::DegenerateConfiguration: return "degenerate_configuration";
    case ErrorCode::InsufficientData: return "insufficient_data";
    case ErrorCode::IllConditioned: return "ill_conditioned";
    case ErrorCode::Cheirality: return "cheirality";
    case ErrorCode::RankDeficient: return "rank_deficient";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::SamplingFailure: return "sampling_failure";
    case ErrorCode::Schema: return "schema";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

namespace {

std::string decorate(const std::string& message, std::optional<int> frame) {
  if (!frame) return message;
  return "frame " + std::to_string(*frame) + ": " + message;
}

}  // namespace

CalibError::CalibError(ErrorCode code, const std::string& message,
                       std::optional<int> frame)
    : std::runtime_error(decorate(message, frame)), code_(code), frame_(frame) {}

bool CalibError::is_numerical() const noexcept {
  switch (code_) {
    case ErrorCode::BehindCamera:
    case ErrorCode::NonConvergence:
    case ErrorCode::DegenerateConfiguration:
    case ErrorCode::InsufficientData:
    case ErrorCode::IllConditioned:
    case ErrorCode::Cheirality:
    case ErrorCode::RankDeficient:
    case ErrorCode::Divergence:
    case ErrorCode::SamplingFailure:
      return true;
    default:
      return false;
  }
}

}  // namespace defcalib
