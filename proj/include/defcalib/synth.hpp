#pragma once

#include <cstdint>
#include <numbers>
#include <optional>
#include <string_view>
#include <vector>

#include "defcalib/dataset.hpp"
#include "defcalib/geometry.hpp"
#include "defcalib/target.hpp"

namespace defcalib {

enum class DeformationRegime { None, Static3D, StaticInPlane, Dynamic, Full };

std::string_view to_string(DeformationRegime regime);
// Accepted names: none, static3d, static_inplane, dynamic, full.
DeformationRegime parse_deformation_regime(std::string_view name);

struct PoseSampling {
  double distance_min = 0.5;  // board center distance from the camera, m
  double distance_max = 3.0;
  double tilt_max = std::numbers::pi / 4.0;  // out-of-plane tilt, rad
  double roll_max = std::numbers::pi;        // rotation about the board normal, rad
  double center_region = 0.8;                // board center lands in this central image fraction
  double min_visible_fraction = 1.0;         // of the corners, in every camera
  int max_attempts = 1000;                   // per frame
};

// Mean maximum out-of-plane deformation of a large carried target (meters).
inline constexpr double kDefaultDynamicAmplitude = 0.0026;

struct DeformationConfig {
  DeformationRegime regime = DeformationRegime::None;
  // Static offsets are uniform in [-static_amplitude, static_amplitude] per
  // coordinate (meters).
  double static_amplitude = 0.0;
  // Per-frame max |dz| is uniform in [dynamic_min_amplitude, dynamic_amplitude].
  double dynamic_amplitude = kDefaultDynamicAmplitude;
  double dynamic_min_amplitude = 0.0;
};

struct ScenarioConfig {
  TargetSpec target;
  Intrinsics intrinsics;
  int frames = 25;
  int image_width = 1280;
  int image_height = 960;
  PoseSampling poses;
  DeformationConfig deformation;
  double noise_sigma = 0.0;  // detector noise per coordinate, px
  std::uint64_t seed = 0;

  // Throws CalibError(InvalidArgument).
  void validate() const;
};

struct GroundTruth {
  Intrinsics intrinsics;
  std::vector<Pose> poses;  // per frame
  std::optional<StaticCorrection> static_correction;
  std::vector<ParaboloidCoeffs> betas;  // per frame, empty without dynamic deformation
  int image_width = 0;
  int image_height = 0;

  // Smallest estimation model that contains the generating deformation.
  DeformationModel model() const;
};

struct Scenario {
  Dataset dataset;
  GroundTruth truth;
  int unobserved_corners = 0;  // corners outside the image, over all frames
  int rejected_poses = 0;
};

// Throws CalibError(SamplingFailure) when a frame exhausts its attempts.
Scenario generate_scenario(const ScenarioConfig& config);

// Exact projections of the deformed board; corners outside the image are
// left out.
Dataset perfect_observations(const GroundTruth& truth, const TargetSpec& spec);

// Frame subsets drawn without replacement inside each subset; each subset is
// sorted. Throws CalibError(InvalidArgument) if subset_size > frame_count.
std::vector<std::vector<int>> sample_subsets(int frame_count, int n_subsets, int subset_size,
                                             std::uint64_t seed);
std::vector<std::vector<int>> sample_subsets(const Dataset& dataset, int n_subsets, int subset_size,
                                             std::uint64_t seed);

// Rigid multi-camera rig observing the same target. Camera 0 is the reference
// (identity pose); scenario.intrinsics is ignored in favor of `intrinsics`.
struct RigConfig {
  ScenarioConfig scenario;
  std::vector<Intrinsics> intrinsics;
  std::vector<Pose> camera_poses;  // camera k w.r.t. camera 0
};

struct RigScenario {
  std::vector<Dataset> cameras;
  std::vector<Intrinsics> intrinsics;
  std::vector<Pose> camera_poses;
  std::vector<Pose> poses;  // target w.r.t. camera 0
  std::optional<StaticCorrection> static_correction;
  std::vector<ParaboloidCoeffs> betas;
};

RigScenario generate_rig_scenario(const RigConfig& config);

}  // namespace defcalib
