#include "defcalib/dataset.hpp"

#include <cmath>
#include <set>
#include <string>
#include <utility>

#include "defcalib/error.hpp"

namespace defcalib {

std::size_t Dataset::observation_count() const {
  std::size_t count = 0;
  for (const auto& frame : frames) count += frame.observations.size();
  return count;
}

Dataset Dataset::subset(std::span<const int> frame_indices) const {
  Dataset out;
  out.camera_id = camera_id;
  out.frames.reserve(frame_indices.size());
  for (int index : frame_indices) {
    if (index < 0 || index >= static_cast<int>(frames.size())) {
      throw CalibError(ErrorCode::OutOfRange, "frame index " + std::to_string(index) + " out of range");
    }
    out.frames.push_back(frames[index]);
  }
  return out;
}

void Dataset::validate(const TargetSpec& spec) const {
  std::set<std::pair<int, int>> seen;
  for (const auto& frame : frames) {
    for (const auto& obs : frame.observations) {
      if (!contains(spec, obs.corner)) {
        throw CalibError(ErrorCode::OutOfRange,
                         "frame " + std::to_string(frame.frame_id) + ": corner (" +
                             std::to_string(obs.corner.n) + ", " + std::to_string(obs.corner.m) +
                             ") outside the target");
      }
      if (!seen.emplace(frame.frame_id, corner_index(spec, obs.corner)).second) {
        throw CalibError(ErrorCode::InvalidArgument,
                         "frame " + std::to_string(frame.frame_id) + ": duplicate corner (" +
                             std::to_string(obs.corner.n) + ", " + std::to_string(obs.corner.m) + ")");
      }
      if (!std::isfinite(obs.uv.x()) || !std::isfinite(obs.uv.y())) {
        throw CalibError(ErrorCode::InvalidArgument,
                         "frame " + std::to_string(frame.frame_id) + ": non-finite observation");
      }
    }
  }
}

}  // namespace defcalib
