#include "defcalib/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "defcalib/error.hpp"

namespace defcalib {

std::string_view to_string(DeformationRegime regime) {
  switch (regime) {
    case DeformationRegime::None: return "none";
    case DeformationRegime::Static3D: return "static3d";
    case DeformationRegime::StaticInPlane: return "static_inplane";
    case DeformationRegime::Dynamic: return "dynamic";
    case DeformationRegime::Full: return "full";
  }
  return "unknown";
}

DeformationRegime parse_deformation_regime(std::string_view name) {
  if (name == "none") return DeformationRegime::None;
  if (name == "static3d") return DeformationRegime::Static3D;
  if (name == "static_inplane") return DeformationRegime::StaticInPlane;
  if (name == "dynamic") return DeformationRegime::Dynamic;
  if (name == "full") return DeformationRegime::Full;
  throw CalibError(ErrorCode::InvalidArgument,
                   "unknown deformation regime '" + std::string(name) +
                       "' (expected none, static3d, static_inplane, dynamic or full)");
}

void ScenarioConfig::validate() const {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw CalibError(ErrorCode::InvalidArgument, "scenario config: " + what);
  };
  target.validate();
  require(intrinsics.is_valid(), "intrinsics must be finite with positive focal lengths");
  require(frames >= 1, "frames must be >= 1");
  require(image_width > 0 && image_height > 0, "image size must be positive");
  require(poses.distance_min > 0.0 && poses.distance_max >= poses.distance_min, "invalid distance range");
  require(poses.tilt_max >= 0.0 && poses.roll_max >= 0.0, "angle ranges must be non-negative");
  require(poses.center_region > 0.0 && poses.center_region <= 1.0, "center_region must be in (0, 1]");
  require(poses.min_visible_fraction > 0.0 && poses.min_visible_fraction <= 1.0,
          "min_visible_fraction must be in (0, 1]");
  require(poses.max_attempts >= 1, "max_attempts must be >= 1");
  require(deformation.static_amplitude >= 0.0 && deformation.dynamic_amplitude >= 0.0 &&
              deformation.dynamic_min_amplitude >= 0.0 &&
              deformation.dynamic_min_amplitude <= deformation.dynamic_amplitude,
          "deformation amplitudes must be non-negative and ordered");
  require(noise_sigma >= 0.0, "noise_sigma must be non-negative");
}

DeformationModel GroundTruth::model() const {
  if (static_correction && !betas.empty()) return DeformationModel::FullInPlanePlusDynamic;
  if (static_correction) return DeformationModel::Static3D;
  if (!betas.empty()) return DeformationModel::DynamicParaboloid;
  return DeformationModel::Standard;
}

namespace {

struct Camera {
  Intrinsics intrinsics;
  Pose pose;  // w.r.t. camera 0
  double max_radius;
};

WorldPoint board_point(const TargetSpec& spec, int corner, const StaticCorrection* sc,
                       const ParaboloidCoeffs* beta) {
  const WorldPoint grid = corner_position(spec, corner_id(spec, corner));
  WorldPoint x = grid;
  if (sc != nullptr) x += sc->offsets[corner];
  if (beta != nullptr) x += paraboloid_offset(grid, *beta);
  return x;
}

// Projects a corner if it is in front of the camera, inside the invertible
// distortion region and inside the image.
bool visible_projection(const Camera& cam, int width, int height, const WorldPoint& x0, ImagePoint* uv) {
  const WorldPoint xc = cam.pose.apply(x0);
  if (!(xc.z() > 0.0)) return false;
  if (std::hypot(xc.x() / xc.z(), xc.y() / xc.z()) >= cam.max_radius) return false;
  *uv = project(xc, cam.intrinsics);
  return uv->x() >= 0.0 && uv->x() < width && uv->y() >= 0.0 && uv->y() < height;
}

Frame observe(const std::vector<Camera>& cams, int k, int width, int height, const TargetSpec& spec,
              int frame_id, const Pose& pose, const StaticCorrection* sc, const ParaboloidCoeffs* beta) {
  Frame frame;
  frame.frame_id = frame_id;
  for (int i = 0; i < spec.corner_count(); ++i) {
    ImagePoint uv;
    if (visible_projection(cams[k], width, height, pose.apply(board_point(spec, i, sc, beta)), &uv)) {
      frame.observations.push_back({corner_id(spec, i), uv});
    }
  }
  return frame;
}

struct RawScenario {
  std::vector<Dataset> cameras;
  std::vector<Pose> poses;
  std::optional<StaticCorrection> static_correction;
  std::vector<ParaboloidCoeffs> betas;
  int unobserved = 0;
  int rejected = 0;
};

RawScenario generate(const ScenarioConfig& config, const std::vector<Camera>& cams) {
  config.validate();
  const TargetSpec& spec = config.target;
  const auto& def = config.deformation;
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  RawScenario out;
  out.cameras.resize(cams.size());

  const bool static3d = def.regime == DeformationRegime::Static3D;
  const bool inplane = def.regime == DeformationRegime::StaticInPlane || def.regime == DeformationRegime::Full;
  const bool dynamic = def.regime == DeformationRegime::Dynamic || def.regime == DeformationRegime::Full;
  if (static3d || inplane) {
    StaticCorrection sc = StaticCorrection::zeros(spec, inplane);
    const int dofs = inplane ? 2 : 3;
    for (int i = 0; i < spec.corner_count(); ++i) {
      for (int d = 0; d < dofs; ++d) {
        sc.offsets[i](d) = uniform(-def.static_amplitude, def.static_amplitude);
      }
    }
    const DeformationModel gauge_model =
        inplane ? DeformationModel::FullInPlanePlusDynamic : DeformationModel::Static3D;
    for (int m : gauge_mask(gauge_model, spec)) sc.offsets[m / dofs](m % dofs) = 0.0;
    out.static_correction = std::move(sc);
  }
  const StaticCorrection* sc = out.static_correction ? &*out.static_correction : nullptr;

  const int needed = static_cast<int>(std::ceil(config.poses.min_visible_fraction * spec.corner_count() - 1e-9));
  for (int j = 0; j < config.frames; ++j) {
    ParaboloidCoeffs beta;
    if (dynamic) {
      beta = {uniform(-1.0, 1.0), uniform(-1.0, 1.0), uniform(-1.0, 1.0)};
      const double current = max_abs_offset(spec, beta);
      const double wanted = uniform(def.dynamic_min_amplitude, def.dynamic_amplitude);
      const double s = current > 0.0 ? wanted / current : 0.0;
      beta = {beta.a * s, beta.b * s, beta.c * s};
      out.betas.push_back(beta);
    }
    const ParaboloidCoeffs* beta_ptr = dynamic ? &out.betas.back() : nullptr;

    bool accepted = false;
    for (int attempt = 0; attempt < config.poses.max_attempts && !accepted; ++attempt) {
      const double region = config.poses.center_region;
      const ImagePoint target(config.image_width * (0.5 + region * (unit(rng) - 0.5)),
                              config.image_height * (0.5 + region * (unit(rng) - 0.5)));
      const double distance = uniform(config.poses.distance_min, config.poses.distance_max);
      const double tilt_axis = uniform(0.0, 2.0 * std::numbers::pi);
      const double tilt = uniform(0.0, config.poses.tilt_max);
      const double roll = uniform(-config.poses.roll_max, config.poses.roll_max);

      Eigen::Vector3d ray;
      try {
        ray = unproject_at_depth(target, cams[0].intrinsics, 1.0).normalized();
      } catch (const CalibError&) {
        ++out.rejected;
        continue;
      }
      const Eigen::Matrix3d r =
          rotation_matrix(Eigen::Vector3d(std::cos(tilt_axis), std::sin(tilt_axis), 0.0) * tilt) *
          rotation_matrix(Eigen::Vector3d(0.0, 0.0, roll));
      const Pose pose = Pose::from_matrix(r, distance * ray);

      std::vector<Frame> frames;
      bool ok = true;
      for (std::size_t k = 0; k < cams.size() && ok; ++k) {
        frames.push_back(observe(cams, static_cast<int>(k), config.image_width, config.image_height, spec, j,
                                 pose, sc, beta_ptr));
        ok = static_cast<int>(frames.back().observations.size()) >= std::max(needed, 4);
      }
      if (!ok) {
        ++out.rejected;
        continue;
      }
      for (std::size_t k = 0; k < cams.size(); ++k) {
        out.unobserved += spec.corner_count() - static_cast<int>(frames[k].observations.size());
        out.cameras[k].frames.push_back(std::move(frames[k]));
      }
      out.poses.push_back(pose);
      accepted = true;
    }
    if (!accepted) {
      throw CalibError(ErrorCode::SamplingFailure,
                       "no admissible pose after " + std::to_string(config.poses.max_attempts) +
                           " attempts; check the distance, tilt and image settings",
                       j);
    }
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto& cam : out.cameras) {
    for (auto& frame : cam.frames) {
      for (auto& obs : frame.observations) {
        const double du = noise(rng);
        const double dv = noise(rng);
        obs.uv += config.noise_sigma * Eigen::Vector2d(du, dv);
      }
    }
  }
  return out;
}

}  // namespace

Scenario generate_scenario(const ScenarioConfig& config) {
  const std::vector<Camera> cams = {
      Camera{config.intrinsics, Pose::identity(), max_invertible_radius(config.intrinsics)}};
  RawScenario raw = generate(config, cams);
  Scenario s;
  s.dataset = std::move(raw.cameras.front());
  s.truth.intrinsics = config.intrinsics;
  s.truth.poses = std::move(raw.poses);
  s.truth.static_correction = std::move(raw.static_correction);
  s.truth.betas = std::move(raw.betas);
  s.truth.image_width = config.image_width;
  s.truth.image_height = config.image_height;
  s.unobserved_corners = raw.unobserved;
  s.rejected_poses = raw.rejected;
  return s;
}

RigScenario generate_rig_scenario(const RigConfig& config) {
  if (config.intrinsics.empty() || config.intrinsics.size() != config.camera_poses.size()) {
    throw CalibError(ErrorCode::InvalidArgument, "rig needs one intrinsics and one pose per camera");
  }
  std::vector<Camera> cams;
  for (std::size_t k = 0; k < config.intrinsics.size(); ++k) {
    if (!config.intrinsics[k].is_valid()) throw CalibError(ErrorCode::InvalidArgument, "invalid rig intrinsics");
    cams.push_back({config.intrinsics[k], config.camera_poses[k], max_invertible_radius(config.intrinsics[k])});
  }
  ScenarioConfig base = config.scenario;
  base.intrinsics = config.intrinsics.front();
  RawScenario raw = generate(base, cams);
  RigScenario s;
  s.cameras = std::move(raw.cameras);
  for (std::size_t k = 0; k < s.cameras.size(); ++k) s.cameras[k].camera_id = "cam" + std::to_string(k);
  s.intrinsics = config.intrinsics;
  s.camera_poses = config.camera_poses;
  s.poses = std::move(raw.poses);
  s.static_correction = std::move(raw.static_correction);
  s.betas = std::move(raw.betas);
  return s;
}

Dataset perfect_observations(const GroundTruth& truth, const TargetSpec& spec) {
  const std::vector<Camera> cams = {
      Camera{truth.intrinsics, Pose::identity(), max_invertible_radius(truth.intrinsics)}};
  const StaticCorrection* sc = truth.static_correction ? &*truth.static_correction : nullptr;
  Dataset out;
  for (std::size_t j = 0; j < truth.poses.size(); ++j) {
    const ParaboloidCoeffs* beta = truth.betas.empty() ? nullptr : &truth.betas[j];
    out.frames.push_back(observe(cams, 0, truth.image_width, truth.image_height, spec, static_cast<int>(j),
                                 truth.poses[j], sc, beta));
  }
  return out;
}

std::vector<std::vector<int>> sample_subsets(int frame_count, int n_subsets, int subset_size,
                                             std::uint64_t seed) {
  if (subset_size < 1 || n_subsets < 1) {
    throw CalibError(ErrorCode::InvalidArgument, "subset count and size must be positive");
  }
  if (subset_size > frame_count) {
    throw CalibError(ErrorCode::InvalidArgument, "subset size " + std::to_string(subset_size) +
                                                     " exceeds the " + std::to_string(frame_count) +
                                                     " available frames");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int>> subsets;
  std::vector<int> pool(frame_count);
  for (int s = 0; s < n_subsets; ++s) {
    std::iota(pool.begin(), pool.end(), 0);
    // partial Fisher-Yates
    for (int i = 0; i < subset_size; ++i) {
      std::uniform_int_distribution<int> pick(i, frame_count - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    std::vector<int> subset(pool.begin(), pool.begin() + subset_size);
    std::sort(subset.begin(), subset.end());
    subsets.push_back(std::move(subset));
  }
  return subsets;
}

std::vector<std::vector<int>> sample_subsets(const Dataset& dataset, int n_subsets, int subset_size,
                                             std::uint64_t seed) {
  return sample_subsets(static_cast<int>(dataset.frames.size()), n_subsets, subset_size, seed);
}

}  // namespace defcalib
