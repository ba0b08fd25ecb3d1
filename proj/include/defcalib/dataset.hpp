#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "defcalib/target.hpp"

namespace defcalib {

struct Observation {
  CornerId corner;
  Eigen::Vector2d uv = Eigen::Vector2d::Zero();  // pixels
};

// Detected corners of one image. Only observed corners are listed.
struct Frame {
  int frame_id = 0;
  std::vector<Observation> observations;
};

struct Dataset {
  std::string camera_id;
  std::vector<Frame> frames;

  std::size_t observation_count() const;
  // Frames at the given positions, in the given order.
  Dataset subset(std::span<const int> frame_indices) const;
  // Throws CalibError(OutOfRange / InvalidArgument) for corners outside the
  // board or duplicate (frame_id, corner) pairs.
  void validate(const TargetSpec& spec) const;
};

}  // namespace defcalib
