#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "defcalib/dataset.hpp"
#include "defcalib/geometry.hpp"
#include "defcalib/init.hpp"
#include "defcalib/target.hpp"

namespace defcalib {

enum class RobustKernel { None, Cauchy };
enum class LinearSolverKind { DenseCholesky, SchurFrames };
// Numeric: central differences per residual row, same sparsity as analytic.
enum class JacobianMode { Analytic, Numeric };

std::string_view to_string(RobustKernel kernel);
RobustKernel parse_robust_kernel(std::string_view name);
std::string_view to_string(JacobianMode mode);
JacobianMode parse_jacobian_mode(std::string_view name);

struct SolverConfig {
  int max_iterations = 200;
  double initial_damping = 1e-3;
  double damping_increase = 10.0;
  double damping_decrease = 10.0;
  double cost_tolerance = 1e-12;      // relative decrease of an accepted step
  double step_tolerance = 1e-10;      // |dx| <= tol * (|x| + tol)
  double gradient_tolerance = 1e-10;  // max |J^T W r|
  RobustKernel kernel = RobustKernel::None;
  double kernel_scale = 1.0;  // pixels
  LinearSolverKind linear_solver = LinearSolverKind::DenseCholesky;
  JacobianMode jacobian = JacobianMode::Analytic;
  // Smallest admissible eigenvalue of the Jacobi-scaled normal matrix
  // relative to its largest one, checked once at the initial point.
  double rank_tolerance = 1e-10;

  // Throws CalibError(InvalidArgument).
  void validate() const;
};

enum class SolverStatus { Converged, MaxIterations, Diverged, RankDeficient };
std::string_view to_string(SolverStatus status);

// Every estimated quantity of a (possibly multi-camera) calibration.
struct ParameterSet {
  std::vector<Intrinsics> intrinsics;  // per camera
  std::vector<Pose> camera_poses;      // camera k w.r.t. camera 0; [0] is identity
  std::vector<Pose> frame_poses;       // target w.r.t. camera 0, per frame
  std::optional<StaticCorrection> static_correction;
  std::vector<ParaboloidCoeffs> betas;  // per frame; empty without a dynamic block
};

struct ProblemOptions {
  std::optional<GaugeAnchors> anchors;  // defaults to GaugeAnchors::defaults
  bool fix_intrinsics = false;
  // Fixed per-corner offsets added to the nominal grid before any estimated
  // deformation (used by reduced calibration).
  std::optional<StaticCorrection> board_correction;
};

// Immutable least-squares problem. Packed parameter order:
//   intrinsics (7 per camera), relative camera poses (6 per camera k >= 1),
//   frame poses (6 per frame: rotation vector, translation),
//   static block (corner-major, 3 or 2 per corner),
//   dynamic block (a, b, c per frame).
// Frames are ordered by first appearance over the cameras; residuals are
// ordered frame-major, then camera, then corner index.
class CalibrationProblem {
 public:
  struct ObservationRef {
    int camera = 0;
    int frame = 0;
    int corner = 0;
    Eigen::Vector2d uv = Eigen::Vector2d::Zero();
  };

  CalibrationProblem(std::vector<Dataset> cameras, TargetSpec spec, DeformationModel model,
                     ProblemOptions options = {});
  CalibrationProblem(Dataset dataset, TargetSpec spec, DeformationModel model,
                     ProblemOptions options = {});

  const TargetSpec& target() const { return spec_; }
  DeformationModel model() const { return model_; }
  const ProblemOptions& options() const { return options_; }
  const std::vector<Dataset>& cameras() const { return cameras_; }
  int num_cameras() const { return static_cast<int>(cameras_.size()); }
  int num_frames() const { return static_cast<int>(frame_ids_.size()); }
  const std::vector<int>& frame_ids() const { return frame_ids_; }
  int num_observations() const { return static_cast<int>(observations_.size()); }
  int num_residuals() const { return 2 * num_observations(); }
  const std::vector<ObservationRef>& observations() const { return observations_; }

  int num_parameters() const { return num_parameters_; }
  int num_free_parameters() const { return num_free_; }
  // Reduced column for each packed parameter, -1 when held fixed.
  const std::vector<int>& free_columns() const { return free_columns_; }
  // Fixed entries of the static block (relative to static_offset()).
  const std::vector<int>& gauge_mask() const { return gauge_mask_; }

  int intrinsics_offset(int camera) const { return Intrinsics::kSize * camera; }
  int camera_pose_offset(int camera) const;  // camera >= 1
  int frame_pose_offset(int frame) const { return frame_pose_base_ + 6 * frame; }
  int static_offset() const { return static_base_; }
  int static_dofs() const { return static_dofs_per_corner(model_); }
  int dynamic_offset(int frame) const { return dynamic_base_ + 3 * frame; }

  // Nominal board point of a corner plus the fixed board correction.
  const WorldPoint& base_point(int corner) const { return base_points_[corner]; }
  const WorldPoint& grid_point(int corner) const { return grid_points_[corner]; }

  // Human-readable name of a packed parameter, e.g. "frame_pose[3].tz".
  std::string describe_parameter(int index) const;

  Eigen::VectorXd pack(const ParameterSet& params) const;
  ParameterSet unpack(const Eigen::VectorXd& packed) const;

 private:
  std::vector<Dataset> cameras_;
  TargetSpec spec_;
  DeformationModel model_;
  ProblemOptions options_;
  std::vector<int> frame_ids_;
  std::vector<ObservationRef> observations_;
  std::vector<WorldPoint> grid_points_;
  std::vector<WorldPoint> base_points_;
  std::vector<int> gauge_mask_;
  std::vector<int> free_columns_;
  int frame_pose_base_ = 0;
  int static_base_ = 0;
  int dynamic_base_ = 0;
  int num_parameters_ = 0;
  int num_free_ = 0;
};

// Observed minus predicted pixel coordinates, two scalars per observation.
// Entries whose point falls behind the camera are NaN and counted in
// `behind_camera`.
Eigen::VectorXd residuals(const CalibrationProblem& problem, const Eigen::VectorXd& params,
                          int* behind_camera = nullptr);

// Analytic Jacobian of residuals() with respect to the free parameters
// (columns follow CalibrationProblem::free_columns()).
Eigen::SparseMatrix<double> jacobian(const CalibrationProblem& problem, const Eigen::VectorXd& params,
                                     JacobianMode mode = JacobianMode::Analytic);

struct CalibrationResult {
  ParameterSet parameters;
  Eigen::VectorXd packed;
  std::vector<int> frame_ids;
  double final_cost = 0.0;      // objective incl. robust kernel
  double squared_error = 0.0;   // sum of squared residuals, no kernel
  std::vector<double> cost_trace;  // initial cost, then one entry per accepted step
  double rmse = 0.0;            // pixels, over residual scalars
  SolverStatus status = SolverStatus::Converged;
  std::string message;
  int iterations = 0;
  int accepted_steps = 0;
  Eigen::VectorXd residuals;

  const Intrinsics& intrinsics() const { return parameters.intrinsics.front(); }
  bool ok() const { return status == SolverStatus::Converged || status == SolverStatus::MaxIterations; }
};

CalibrationResult solve_lm(const CalibrationProblem& problem, const Eigen::VectorXd& initial,
                           const SolverConfig& config);

struct CalibrateOptions {
  std::optional<GaugeAnchors> anchors;
  // Per-camera intrinsics guess; closed-form initialization when absent.
  std::vector<Intrinsics> initial_intrinsics;
  IntrinsicsInitOptions intrinsics_init;
};

// Closed-form initial values: per-frame DLT poses, intrinsics from the
// homographies (or the supplied guess), relative camera poses from shared
// frames, zero deformation. Throws with frame attribution.
ParameterSet initialize_parameters(const CalibrationProblem& problem,
                                   const CalibrateOptions& options = {});

CalibrationResult calibrate(const Dataset& dataset, const TargetSpec& spec, DeformationModel model,
                            const SolverConfig& config, const CalibrateOptions& options = {});

// Cameras are matched frame-by-frame through frame_id. Camera 0 defines the
// reference frame of the target poses.
CalibrationResult calibrate_multicamera(const std::vector<Dataset>& cameras, const TargetSpec& spec,
                                        DeformationModel model, const SolverConfig& config,
                                        const CalibrateOptions& options = {});

// Target poses only, with intrinsics and an optional static board correction
// held fixed. The RMSE of the result is the test error of `intrinsics`.
CalibrationResult reduced_calibrate(const Dataset& dataset, const TargetSpec& spec,
                                    const Intrinsics& intrinsics,
                                    const StaticCorrection* fixed_correction,
                                    const SolverConfig& config);

}  // namespace defcalib
