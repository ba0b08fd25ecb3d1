#include "defcalib/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "defcalib/error.hpp"

namespace defcalib {

std::string_view to_string(RobustKernel kernel) {
  return kernel == RobustKernel::Cauchy ? "cauchy" : "none";
}

RobustKernel parse_robust_kernel(std::string_view name) {
  if (name == "none") return RobustKernel::None;
  if (name == "cauchy") return RobustKernel::Cauchy;
  throw CalibError(ErrorCode::InvalidArgument,
                   "unknown robust kernel '" + std::string(name) + "' (expected none or cauchy)");
}

std::string_view to_string(JacobianMode mode) {
  return mode == JacobianMode::Numeric ? "numeric" : "analytic";
}

JacobianMode parse_jacobian_mode(std::string_view name) {
  if (name == "analytic") return JacobianMode::Analytic;
  if (name == "numeric") return JacobianMode::Numeric;
  throw CalibError(ErrorCode::InvalidArgument,
                   "unknown jacobian mode '" + std::string(name) + "' (expected analytic or numeric)");
}

std::string_view to_string(SolverStatus status) {
  switch (status) {
    case SolverStatus::Converged: return "converged";
    case SolverStatus::MaxIterations: return "max_iter";
    case SolverStatus::Diverged: return "diverged";
    case SolverStatus::RankDeficient: return "rank_deficient";
  }
  return "unknown";
}

void SolverConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw CalibError(ErrorCode::InvalidArgument, std::string("solver config: ") + what);
  };
  require(max_iterations >= 1, "max_iterations must be >= 1");
  require(initial_damping > 0.0, "initial damping must be positive");
  require(damping_increase > 1.0 && damping_decrease > 1.0, "damping factors must exceed 1");
  require(cost_tolerance > 0.0 && step_tolerance > 0.0 && gradient_tolerance > 0.0,
          "tolerances must be positive");
  require(kernel_scale > 0.0, "kernel scale must be positive");
  require(rank_tolerance > 0.0, "rank tolerance must be positive");
}

// ---------------------------------------------------------------------------
// Problem layout

CalibrationProblem::CalibrationProblem(Dataset dataset, TargetSpec spec, DeformationModel model,
                                       ProblemOptions options)
    : CalibrationProblem(std::vector<Dataset>{std::move(dataset)}, spec, model, std::move(options)) {}

CalibrationProblem::CalibrationProblem(std::vector<Dataset> cameras, TargetSpec spec,
                                       DeformationModel model, ProblemOptions options)
    : cameras_(std::move(cameras)), spec_(spec), model_(model), options_(std::move(options)) {
  spec_.validate();
  if (cameras_.empty()) throw CalibError(ErrorCode::InvalidArgument, "no camera datasets");

  std::map<int, int> frame_index;
  for (const auto& cam : cameras_) {
    cam.validate(spec_);
    for (const auto& frame : cam.frames) {
      if (frame_index.emplace(frame.frame_id, static_cast<int>(frame_ids_.size())).second) {
        frame_ids_.push_back(frame.frame_id);
      }
    }
  }
  if (frame_ids_.empty()) throw CalibError(ErrorCode::InsufficientData, "dataset has no frames");

  // frame-major, camera, corner-minor
  std::vector<std::vector<std::vector<ObservationRef>>> grouped(
      frame_ids_.size(), std::vector<std::vector<ObservationRef>>(cameras_.size()));
  for (int k = 0; k < num_cameras(); ++k) {
    for (const auto& frame : cameras_[k].frames) {
      const int j = frame_index.at(frame.frame_id);
      for (const auto& obs : frame.observations) {
        grouped[j][k].push_back({k, j, corner_index(spec_, obs.corner), obs.uv});
      }
    }
  }
  for (auto& per_frame : grouped) {
    for (auto& per_cam : per_frame) {
      std::sort(per_cam.begin(), per_cam.end(),
                [](const ObservationRef& a, const ObservationRef& b) { return a.corner < b.corner; });
      observations_.insert(observations_.end(), per_cam.begin(), per_cam.end());
    }
  }

  grid_points_.resize(spec_.corner_count());
  base_points_.resize(spec_.corner_count());
  if (options_.board_correction &&
      static_cast<int>(options_.board_correction->offsets.size()) != spec_.corner_count()) {
    throw CalibError(ErrorCode::InvalidArgument, "fixed board correction does not match the target");
  }
  for (int i = 0; i < spec_.corner_count(); ++i) {
    grid_points_[i] = corner_position(spec_, corner_id(spec_, i));
    base_points_[i] = grid_points_[i];
    if (options_.board_correction) base_points_[i] += options_.board_correction->offsets[i];
  }

  gauge_mask_ = defcalib::gauge_mask(model_, spec_, options_.anchors.value_or(GaugeAnchors::defaults(spec_)));

  const int k = num_cameras();
  const int f = num_frames();
  frame_pose_base_ = Intrinsics::kSize * k + 6 * (k - 1);
  static_base_ = frame_pose_base_ + 6 * f;
  dynamic_base_ = static_base_ + static_dofs() * spec_.corner_count();
  num_parameters_ = dynamic_base_ + (has_dynamic_block(model_) ? 3 * f : 0);

  std::vector<bool> fixed(num_parameters_, false);
  if (options_.fix_intrinsics) {
    for (int i = 0; i < Intrinsics::kSize * k; ++i) fixed[i] = true;
  }
  for (int m : gauge_mask_) fixed[static_base_ + m] = true;
  free_columns_.assign(num_parameters_, -1);
  num_free_ = 0;
  for (int i = 0; i < num_parameters_; ++i) {
    if (!fixed[i]) free_columns_[i] = num_free_++;
  }
}

int CalibrationProblem::camera_pose_offset(int camera) const {
  if (camera < 1 || camera >= num_cameras()) {
    throw CalibError(ErrorCode::OutOfRange, "camera pose index out of range");
  }
  return Intrinsics::kSize * num_cameras() + 6 * (camera - 1);
}

std::string CalibrationProblem::describe_parameter(int index) const {
  static constexpr const char* kIntr[] = {"fx", "fy", "ppx", "ppy", "k1", "k2", "k3"};
  static constexpr const char* kPose[] = {"rx", "ry", "rz", "tx", "ty", "tz"};
  static constexpr const char* kXyz[] = {"dx", "dy", "dz"};
  static constexpr const char* kBeta[] = {"a", "b", "c"};
  std::ostringstream out;
  if (index < Intrinsics::kSize * num_cameras()) {
    out << "intrinsics[" << index / Intrinsics::kSize << "]." << kIntr[index % Intrinsics::kSize];
  } else if (index < frame_pose_base_) {
    const int local = index - Intrinsics::kSize * num_cameras();
    out << "camera_pose[" << local / 6 + 1 << "]." << kPose[local % 6];
  } else if (index < static_base_) {
    const int local = index - frame_pose_base_;
    out << "frame_pose[" << local / 6 << "]." << kPose[local % 6];
  } else if (index < dynamic_base_) {
    const int local = index - static_base_;
    out << "static[" << local / static_dofs() << "]." << kXyz[local % static_dofs()];
  } else {
    const int local = index - dynamic_base_;
    out << "beta[" << local / 3 << "]." << kBeta[local % 3];
  }
  return out.str();
}

Eigen::VectorXd CalibrationProblem::pack(const ParameterSet& p) const {
  const int k = num_cameras();
  const int f = num_frames();
  if (static_cast<int>(p.intrinsics.size()) != k || static_cast<int>(p.frame_poses.size()) != f ||
      (k > 1 && static_cast<int>(p.camera_poses.size()) != k)) {
    throw CalibError(ErrorCode::MissingParameters, "parameter set does not match the problem layout");
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(num_parameters_);
  for (int c = 0; c < k; ++c) {
    const auto a = p.intrinsics[c].to_array();
    for (int i = 0; i < Intrinsics::kSize; ++i) x(intrinsics_offset(c) + i) = a[i];
  }
  for (int c = 1; c < k; ++c) {
    x.segment<3>(camera_pose_offset(c)) = p.camera_poses[c].rotation;
    x.segment<3>(camera_pose_offset(c) + 3) = p.camera_poses[c].translation;
  }
  for (int j = 0; j < f; ++j) {
    x.segment<3>(frame_pose_offset(j)) = p.frame_poses[j].rotation;
    x.segment<3>(frame_pose_offset(j) + 3) = p.frame_poses[j].translation;
  }
  const int dofs = static_dofs();
  if (dofs > 0) {
    if (!p.static_correction ||
        static_cast<int>(p.static_correction->offsets.size()) != spec_.corner_count()) {
      throw CalibError(ErrorCode::MissingParameters, "model requires a static correction block");
    }
    for (int i = 0; i < spec_.corner_count(); ++i) {
      for (int d = 0; d < dofs; ++d) x(static_base_ + dofs * i + d) = p.static_correction->offsets[i](d);
    }
  }
  if (has_dynamic_block(model_)) {
    if (static_cast<int>(p.betas.size()) != f) {
      throw CalibError(ErrorCode::MissingParameters, "model requires one paraboloid per frame");
    }
    for (int j = 0; j < f; ++j) x.segment<3>(dynamic_offset(j)) = p.betas[j].as_vector();
  }
  return x;
}

ParameterSet CalibrationProblem::unpack(const Eigen::VectorXd& x) const {
  if (x.size() != num_parameters_) {
    throw CalibError(ErrorCode::InvalidArgument, "packed parameter vector has the wrong length");
  }
  ParameterSet p;
  const int k = num_cameras();
  for (int c = 0; c < k; ++c) {
    p.intrinsics.push_back(Intrinsics::from_array(
        std::span<const double, Intrinsics::kSize>(x.data() + intrinsics_offset(c), Intrinsics::kSize)));
  }
  p.camera_poses.push_back(Pose::identity());
  for (int c = 1; c < k; ++c) {
    p.camera_poses.push_back(Pose{x.segment<3>(camera_pose_offset(c)), x.segment<3>(camera_pose_offset(c) + 3)});
  }
  for (int j = 0; j < num_frames(); ++j) {
    p.frame_poses.push_back(Pose{x.segment<3>(frame_pose_offset(j)), x.segment<3>(frame_pose_offset(j) + 3)});
  }
  const int dofs = static_dofs();
  if (dofs > 0) {
    StaticCorrection sc = StaticCorrection::zeros(spec_, dofs == 2);
    for (int i = 0; i < spec_.corner_count(); ++i) {
      for (int d = 0; d < dofs; ++d) sc.offsets[i](d) = x(static_base_ + dofs * i + d);
    }
    p.static_correction = std::move(sc);
  }
  if (has_dynamic_block(model_)) {
    for (int j = 0; j < num_frames(); ++j) {
      p.betas.push_back(ParaboloidCoeffs::from_vector(x.segment<3>(dynamic_offset(j))));
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Residual and Jacobian evaluation

namespace {

constexpr int kMaxRowColumns = 2 * Intrinsics::kSize + 6 + 6 + 3 + 3;

struct RowBlock {
  Eigen::Vector2d r = Eigen::Vector2d::Zero();
  bool valid = true;
  int count = 0;
  std::array<int, kMaxRowColumns> cols{};
  std::array<int, kMaxRowColumns> params{};
  Eigen::Matrix<double, 2, kMaxRowColumns> jac;
};

struct RotationCache {
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d right_jacobian = Eigen::Matrix3d::Identity();
};

class Evaluator {
 public:
  Evaluator(const CalibrationProblem& problem, const Eigen::VectorXd& x) : problem_(problem), x_(x) {
    if (x.size() != problem.num_parameters()) {
      throw CalibError(ErrorCode::InvalidArgument, "packed parameter vector has the wrong length");
    }
    for (int c = 0; c < problem.num_cameras(); ++c) {
      intrinsics_.push_back(Intrinsics::from_array(std::span<const double, Intrinsics::kSize>(
          x.data() + problem.intrinsics_offset(c), Intrinsics::kSize)));
      camera_rotations_.push_back(c == 0 ? RotationCache{} : rotation(problem.camera_pose_offset(c)));
    }
    for (int j = 0; j < problem.num_frames(); ++j) {
      frame_rotations_.push_back(rotation(problem.frame_pose_offset(j)));
    }
  }

  // Returns false if the point is behind the camera.
  bool evaluate(const CalibrationProblem::ObservationRef& obs, RowBlock* row, bool with_jacobian) const {
    const auto& p = problem_;
    const int j = obs.frame;
    const int k = obs.camera;
    const WorldPoint& grid = p.grid_point(obs.corner);
    WorldPoint board = p.base_point(obs.corner);
    const int dofs = p.static_dofs();
    const int static_at = p.static_offset() + dofs * obs.corner;
    for (int d = 0; d < dofs; ++d) board(d) += x_(static_at + d);
    Eigen::Vector3d beta_basis = Eigen::Vector3d::Zero();
    if (has_dynamic_block(p.model())) {
      beta_basis << grid.x() * grid.x(), grid.y() * grid.y(), grid.x() * grid.y();
      board.z() += x_.segment<3>(p.dynamic_offset(j)).dot(beta_basis);
    }

    const RotationCache& frame_rot = frame_rotations_[j];
    const Eigen::Vector3d x1 = frame_rot.r * board + x_.segment<3>(p.frame_pose_offset(j) + 3);
    Eigen::Vector3d xk = x1;
    if (k > 0) xk = camera_rotations_[k].r * x1 + x_.segment<3>(p.camera_pose_offset(k) + 3);
    if (!(xk.z() > 0.0)) {
      row->valid = false;
      row->r.setConstant(std::numeric_limits<double>::quiet_NaN());
      row->count = 0;
      return false;
    }
    ProjectionJacobian pj;
    const ImagePoint uv = project(xk, intrinsics_[k], with_jacobian ? &pj : nullptr);
    row->valid = true;
    row->r = obs.uv - uv;
    row->count = 0;
    if (!with_jacobian) return true;

    const auto& free = p.free_columns();
    const auto add = [&](int param, const Eigen::Vector2d& d_pred) {
      const int col = free[param];
      if (col < 0) return;
      row->cols[row->count] = col;
      row->params[row->count] = param;
      row->jac.col(row->count) = -d_pred;
      ++row->count;
    };

    for (int i = 0; i < Intrinsics::kSize; ++i) add(p.intrinsics_offset(k) + i, pj.d_intrinsics.col(i));
    Eigen::Matrix<double, 2, 3> d_x1 = pj.d_point;
    if (k > 0) {
      const RotationCache& cam = camera_rotations_[k];
      const Eigen::Matrix<double, 2, 3> d_rot = pj.d_point * (-cam.r * skew_matrix(x1) * cam.right_jacobian);
      const int off = p.camera_pose_offset(k);
      for (int i = 0; i < 3; ++i) add(off + i, d_rot.col(i));
      for (int i = 0; i < 3; ++i) add(off + 3 + i, pj.d_point.col(i));
      d_x1 = pj.d_point * cam.r;
    }
    const Eigen::Matrix<double, 2, 3> d_rot = d_x1 * (-frame_rot.r * skew_matrix(board) * frame_rot.right_jacobian);
    const int pose_off = p.frame_pose_offset(j);
    for (int i = 0; i < 3; ++i) add(pose_off + i, d_rot.col(i));
    for (int i = 0; i < 3; ++i) add(pose_off + 3 + i, d_x1.col(i));
    const Eigen::Matrix<double, 2, 3> d_board = d_x1 * frame_rot.r;
    for (int d = 0; d < dofs; ++d) add(static_at + d, d_board.col(d));
    if (has_dynamic_block(p.model())) {
      for (int i = 0; i < 3; ++i) add(p.dynamic_offset(j) + i, d_board.col(2) * beta_basis(i));
    }
    return true;
  }

  double get(int param) const { return x_(param); }

  // Changes one packed parameter and refreshes the cached block it belongs to.
  void set(int param, double value) {
    const auto& p = problem_;
    x_(param) = value;
    if (param < Intrinsics::kSize * p.num_cameras()) {
      const int c = param / Intrinsics::kSize;
      intrinsics_[c] = Intrinsics::from_array(
          std::span<const double, Intrinsics::kSize>(x_.data() + p.intrinsics_offset(c), Intrinsics::kSize));
      return;
    }
    for (int k = 1; k < p.num_cameras(); ++k) {
      const int off = p.camera_pose_offset(k);
      if (param >= off && param < off + 3) camera_rotations_[k] = rotation(off);
    }
    if (p.num_frames() > 0 && param >= p.frame_pose_offset(0) && param < p.frame_pose_offset(p.num_frames())) {
      const int j = (param - p.frame_pose_offset(0)) / 6;
      const int off = p.frame_pose_offset(j);
      if (param < off + 3) frame_rotations_[j] = rotation(off);
    }
  }

 private:
  RotationCache rotation(int offset) const {
    const Eigen::Vector3d w = x_.segment<3>(offset);
    return RotationCache{rotation_matrix(w), rotation_right_jacobian(w)};
  }

  const CalibrationProblem& problem_;
  Eigen::VectorXd x_;
  std::vector<Intrinsics> intrinsics_;
  std::vector<RotationCache> camera_rotations_;
  std::vector<RotationCache> frame_rotations_;
};

// Replaces the analytic entries of a row by central differences.
void numeric_row(Evaluator& eval, const CalibrationProblem::ObservationRef& obs, RowBlock* row) {
  RowBlock plus, minus;
  for (int c = 0; c < row->count; ++c) {
    const int param = row->params[c];
    const double x0 = eval.get(param);
    const double h = 1e-6 * std::max(1.0, std::abs(x0));
    eval.set(param, x0 + h);
    const bool ok_plus = eval.evaluate(obs, &plus, false);
    eval.set(param, x0 - h);
    const bool ok_minus = eval.evaluate(obs, &minus, false);
    eval.set(param, x0);
    if (ok_plus && ok_minus) {
      row->jac.col(c) = (plus.r - minus.r) / (2.0 * h);
    } else if (ok_plus) {
      row->jac.col(c) = (plus.r - row->r) / h;
    } else if (ok_minus) {
      row->jac.col(c) = (row->r - minus.r) / h;
    }
  }
}

// Fills `rows`; returns the number of observations behind the camera.
int evaluate_rows(const CalibrationProblem& problem, const Eigen::VectorXd& x,
                  std::vector<RowBlock>* rows, bool with_jacobian,
                  JacobianMode mode = JacobianMode::Analytic) {
  Evaluator eval(problem, x);
  const auto& obs = problem.observations();
  rows->resize(obs.size());
  int behind = 0;
  const bool numeric = with_jacobian && mode == JacobianMode::Numeric;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    RowBlock& row = (*rows)[i];
    if (!eval.evaluate(obs[i], &row, with_jacobian)) {
      ++behind;
    } else if (numeric) {
      numeric_row(eval, obs[i], &row);
    }
  }
  return behind;
}

double kernel_rho(double s, const SolverConfig& config) {
  if (config.kernel == RobustKernel::None) return s;
  const double c2 = config.kernel_scale * config.kernel_scale;
  return c2 * std::log1p(s / c2);
}

double kernel_weight(double s, const SolverConfig& config) {
  if (config.kernel == RobustKernel::None) return 1.0;
  const double c2 = config.kernel_scale * config.kernel_scale;
  return 1.0 / (1.0 + s / c2);
}

double objective(const std::vector<RowBlock>& rows, const SolverConfig& config) {
  double cost = 0.0;
  for (const auto& row : rows) {
    if (!row.valid) return std::numeric_limits<double>::quiet_NaN();
    cost += kernel_rho(row.r.squaredNorm(), config);
  }
  return cost;
}

struct NormalEquations {
  Eigen::MatrixXd a;
  Eigen::VectorXd g;  // J^T W r
};

NormalEquations assemble(const std::vector<RowBlock>& rows, int n, const SolverConfig* config) {
  NormalEquations ne{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
  for (const auto& row : rows) {
    const double w = config != nullptr ? kernel_weight(row.r.squaredNorm(), *config) : 1.0;
    for (int p = 0; p < row.count; ++p) {
      const int cp = row.cols[p];
      ne.g(cp) += w * row.jac.col(p).dot(row.r);
      for (int q = 0; q <= p; ++q) {
        const double v = w * row.jac.col(p).dot(row.jac.col(q));
        ne.a(cp, row.cols[q]) += v;
        if (q != p) ne.a(row.cols[q], cp) += v;
      }
    }
  }
  return ne;
}

// Per-frame grouping of the reduced columns for the Schur path.
struct SchurLayout {
  std::vector<int> global;
  std::vector<std::vector<int>> frames;
};

SchurLayout make_schur_layout(const CalibrationProblem& p) {
  SchurLayout layout;
  layout.frames.resize(p.num_frames());
  std::vector<int> owner(p.num_parameters(), -1);
  for (int j = 0; j < p.num_frames(); ++j) {
    for (int i = 0; i < 6; ++i) owner[p.frame_pose_offset(j) + i] = j;
    if (has_dynamic_block(p.model())) {
      for (int i = 0; i < 3; ++i) owner[p.dynamic_offset(j) + i] = j;
    }
  }
  for (int i = 0; i < p.num_parameters(); ++i) {
    const int col = p.free_columns()[i];
    if (col < 0) continue;
    if (owner[i] < 0) layout.global.push_back(col);
    else layout.frames[owner[i]].push_back(col);
  }
  return layout;
}

bool solve_dense(const NormalEquations& ne, double lambda, Eigen::VectorXd* delta) {
  Eigen::MatrixXd a = ne.a;
  a.diagonal() *= (1.0 + lambda);
  const Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return false;
  *delta = -llt.solve(ne.g);
  return delta->allFinite();
}

bool solve_schur(const NormalEquations& ne, const SchurLayout& layout, double lambda,
                 Eigen::VectorXd* delta) {
  const int n = static_cast<int>(ne.g.size());
  const Eigen::VectorXd b = -ne.g;
  const auto& gi = layout.global;
  const int ng = static_cast<int>(gi.size());
  Eigen::MatrixXd s(ng, ng);
  Eigen::VectorXd rhs(ng);
  for (int p = 0; p < ng; ++p) {
    rhs(p) = b(gi[p]);
    for (int q = 0; q < ng; ++q) s(p, q) = ne.a(gi[p], gi[q]);
    s(p, p) *= (1.0 + lambda);
  }
  std::vector<Eigen::LLT<Eigen::MatrixXd>> frame_llt(layout.frames.size());
  std::vector<Eigen::MatrixXd> frame_w(layout.frames.size());
  for (std::size_t f = 0; f < layout.frames.size(); ++f) {
    const auto& fi = layout.frames[f];
    const int nf = static_cast<int>(fi.size());
    if (nf == 0) continue;
    Eigen::MatrixXd v(nf, nf);
    Eigen::MatrixXd w(ng, nf);
    Eigen::VectorXd bf(nf);
    for (int p = 0; p < nf; ++p) {
      bf(p) = b(fi[p]);
      for (int q = 0; q < nf; ++q) v(p, q) = ne.a(fi[p], fi[q]);
      v(p, p) *= (1.0 + lambda);
      for (int q = 0; q < ng; ++q) w(q, p) = ne.a(gi[q], fi[p]);
    }
    frame_llt[f].compute(v);
    if (frame_llt[f].info() != Eigen::Success) return false;
    if (ng > 0) {
      const Eigen::MatrixXd vinv_wt = frame_llt[f].solve(w.transpose());
      s.noalias() -= w * vinv_wt;
      rhs.noalias() -= w * frame_llt[f].solve(bf);
    }
    frame_w[f] = std::move(w);
  }
  Eigen::VectorXd dg = Eigen::VectorXd::Zero(ng);
  if (ng > 0) {
    const Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) return false;
    dg = llt.solve(rhs);
  }
  delta->setZero(n);
  for (int p = 0; p < ng; ++p) (*delta)(gi[p]) = dg(p);
  for (std::size_t f = 0; f < layout.frames.size(); ++f) {
    const auto& fi = layout.frames[f];
    const int nf = static_cast<int>(fi.size());
    if (nf == 0) continue;
    Eigen::VectorXd bf(nf);
    for (int p = 0; p < nf; ++p) bf(p) = b(fi[p]);
    if (ng > 0) bf.noalias() -= frame_w[f].transpose() * dg;
    const Eigen::VectorXd df = frame_llt[f].solve(bf);
    for (int p = 0; p < nf; ++p) (*delta)(fi[p]) = df(p);
  }
  return delta->allFinite();
}

// Returns an empty string when the Jacobi-scaled normal matrix has full
// rank, otherwise the parameters spanning its most deficient direction.
std::string rank_deficiency(const CalibrationProblem& problem, const Eigen::MatrixXd& a,
                            double tolerance) {
  const int n = static_cast<int>(a.rows());
  std::vector<int> packed_of(n, -1);
  for (int i = 0; i < problem.num_parameters(); ++i) {
    if (problem.free_columns()[i] >= 0) packed_of[problem.free_columns()[i]] = i;
  }
  Eigen::VectorXd scale(n);
  for (int i = 0; i < n; ++i) {
    if (!(a(i, i) > 0.0)) return problem.describe_parameter(packed_of[i]) + " (no observation depends on it)";
    scale(i) = 1.0 / std::sqrt(a(i, i));
  }
  const Eigen::MatrixXd scaled = scale.asDiagonal() * a * scale.asDiagonal();

  // Pivoted LDLT pivots collapse on (near) singular matrices; only confirm
  // with the spectrum when they do.
  constexpr double kScreen = 1e-6;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(scaled);
  const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() == Eigen::Success && d.minCoeff() > kScreen * d.maxCoeff()) return {};

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled);
  const double smallest = eig.eigenvalues()(0);
  if (smallest > tolerance * eig.eigenvalues()(n - 1)) return {};

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const Eigen::VectorXd v = eig.eigenvectors().col(0).cwiseAbs();
  const int shown = std::min(n, 3);
  std::partial_sort(order.begin(), order.begin() + shown, order.end(), [&](int l, int r) { return v(l) > v(r); });
  std::ostringstream msg;
  for (int k = 0; k < shown; ++k) {
    if (k > 0 && v(order[k]) < 0.1 * v(order[0])) break;
    msg << (k > 0 ? ", " : "") << problem.describe_parameter(packed_of[order[k]]);
  }
  msg << " (smallest scaled eigenvalue " << smallest << ")";
  return msg.str();
}

void canonicalize_rotations(const CalibrationProblem& p, Eigen::VectorXd* x) {
  for (int c = 1; c < p.num_cameras(); ++c) {
    x->segment<3>(p.camera_pose_offset(c)) = canonical_rotation_vector(x->segment<3>(p.camera_pose_offset(c)));
  }
  for (int j = 0; j < p.num_frames(); ++j) {
    x->segment<3>(p.frame_pose_offset(j)) = canonical_rotation_vector(x->segment<3>(p.frame_pose_offset(j)));
  }
}

}  // namespace

Eigen::VectorXd residuals(const CalibrationProblem& problem, const Eigen::VectorXd& params,
                          int* behind_camera) {
  std::vector<RowBlock> rows;
  const int behind = evaluate_rows(problem, params, &rows, false);
  if (behind_camera != nullptr) *behind_camera = behind;
  Eigen::VectorXd r(2 * rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) r.segment<2>(2 * i) = rows[i].r;
  return r;
}

Eigen::SparseMatrix<double> jacobian(const CalibrationProblem& problem, const Eigen::VectorXd& params,
                                     JacobianMode mode) {
  std::vector<RowBlock> rows;
  const int behind = evaluate_rows(problem, params, &rows, true, mode);
  if (behind > 0) {
    throw CalibError(ErrorCode::BehindCamera,
                     std::to_string(behind) + " observation(s) project from behind the camera");
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(rows.size() * 2 * kMaxRowColumns);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int p = 0; p < rows[i].count; ++p) {
      triplets.emplace_back(2 * i, rows[i].cols[p], rows[i].jac(0, p));
      triplets.emplace_back(2 * i + 1, rows[i].cols[p], rows[i].jac(1, p));
    }
  }
  Eigen::SparseMatrix<double> j(2 * static_cast<int>(rows.size()), problem.num_free_parameters());
  j.setFromTriplets(triplets.begin(), triplets.end());
  return j;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

CalibrationResult solve_lm(const CalibrationProblem& problem, const Eigen::VectorXd& initial,
                           const SolverConfig& config) {
  config.validate();
  if (initial.size() != problem.num_parameters()) {
    throw CalibError(ErrorCode::InvalidArgument, "initial parameter vector has the wrong length");
  }
  constexpr double kMaxDamping = 1e16;
  constexpr double kMinDamping = 1e-16;

  CalibrationResult result;
  result.frame_ids = problem.frame_ids();
  Eigen::VectorXd x = initial;
  canonicalize_rotations(problem, &x);

  const auto finish = [&](SolverStatus status, std::string message) {
    result.status = status;
    result.message = std::move(message);
    result.packed = x;
    result.parameters = problem.unpack(x);
    result.residuals = residuals(problem, x);
    result.squared_error = result.residuals.squaredNorm();
    result.rmse = result.residuals.size() > 0
                      ? std::sqrt(result.squared_error / static_cast<double>(result.residuals.size()))
                      : 0.0;
    return result;
  };

  std::vector<RowBlock> rows;
  const int behind = evaluate_rows(problem, x, &rows, true, config.jacobian);
  double cost = objective(rows, config);
  result.final_cost = cost;
  result.cost_trace.push_back(cost);
  if (behind > 0 || !std::isfinite(cost)) {
    return finish(SolverStatus::Diverged, "initial cost is not finite (" + std::to_string(behind) +
                                              " observation(s) behind the camera)");
  }
  if (problem.num_free_parameters() == 0) return finish(SolverStatus::Converged, "no free parameters");

  const int n = problem.num_free_parameters();
  {
    const NormalEquations plain = assemble(rows, n, nullptr);
    const std::string deficient = rank_deficiency(problem, plain.a, config.rank_tolerance);
    if (!deficient.empty()) {
      return finish(SolverStatus::RankDeficient, "rank-deficient normal equations at " + deficient);
    }
  }
  const SchurLayout schur = config.linear_solver == LinearSolverKind::SchurFrames
                                ? make_schur_layout(problem)
                                : SchurLayout{};

  std::vector<RowBlock> trial_rows;
  double lambda = config.initial_damping;
  SolverStatus status = SolverStatus::MaxIterations;
  std::string message = "iteration limit reached";
  bool done = false;
  while (!done && result.iterations < config.max_iterations) {
    ++result.iterations;
    const NormalEquations ne = assemble(rows, n, &config);
    if (ne.g.lpNorm<Eigen::Infinity>() <= config.gradient_tolerance) {
      status = SolverStatus::Converged;
      message = "gradient tolerance reached";
      break;
    }
    while (true) {
      Eigen::VectorXd delta;
      const bool solved = config.linear_solver == LinearSolverKind::SchurFrames
                              ? solve_schur(ne, schur, lambda, &delta)
                              : solve_dense(ne, lambda, &delta);
      if (!solved) {
        lambda *= config.damping_increase;
        if (lambda > kMaxDamping) {
          status = SolverStatus::Converged;
          message = "damped system could not be solved; no further decrease";
          done = true;
          break;
        }
        continue;
      }
      if (delta.norm() <= config.step_tolerance * (x.norm() + config.step_tolerance)) {
        status = SolverStatus::Converged;
        message = "step tolerance reached";
        done = true;
        break;
      }
      Eigen::VectorXd x_new = x;
      for (int i = 0; i < problem.num_parameters(); ++i) {
        const int col = problem.free_columns()[i];
        if (col >= 0) x_new(i) += delta(col);
      }
      canonicalize_rotations(problem, &x_new);
      evaluate_rows(problem, x_new, &trial_rows, false);
      const double new_cost = objective(trial_rows, config);
      if (std::isfinite(new_cost) && new_cost < cost) {
        const double relative = (cost - new_cost) / cost;
        x = std::move(x_new);
        cost = new_cost;
        result.cost_trace.push_back(cost);
        ++result.accepted_steps;
        lambda = std::max(lambda / config.damping_decrease, kMinDamping);
        if (relative <= config.cost_tolerance) {
          status = SolverStatus::Converged;
          message = "cost tolerance reached";
          done = true;
        } else {
          evaluate_rows(problem, x, &rows, true, config.jacobian);
        }
        break;
      }
      lambda *= config.damping_increase;
      if (lambda > kMaxDamping) {
        status = SolverStatus::Converged;
        message = "no further decrease of the cost";
        done = true;
        break;
      }
    }
  }
  result.final_cost = cost;
  return finish(status, message);
}

// ---------------------------------------------------------------------------
// Pipelines

namespace {

Eigen::Matrix3d mean_rotation(const std::vector<Eigen::Matrix3d>& rotations) {
  Eigen::Matrix3d sum = Eigen::Matrix3d::Zero();
  for (const auto& r : rotations) sum += r;
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(sum, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
  fix(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * fix * svd.matrixV().transpose();
}

}  // namespace

ParameterSet initialize_parameters(const CalibrationProblem& problem, const CalibrateOptions& options) {
  const int k_count = problem.num_cameras();
  const bool have_guess = !options.initial_intrinsics.empty();
  if (have_guess && static_cast<int>(options.initial_intrinsics.size()) != k_count) {
    throw CalibError(ErrorCode::InvalidArgument, "need one intrinsics guess per camera");
  }
  if (problem.options().fix_intrinsics && !have_guess) {
    throw CalibError(ErrorCode::InvalidArgument, "fixed intrinsics require supplied values");
  }

  std::map<int, int> frame_index;
  for (int j = 0; j < problem.num_frames(); ++j) frame_index[problem.frame_ids()[j]] = j;

  ParameterSet params;
  // per camera: frame index -> board pose in that camera
  std::vector<std::map<int, Pose>> seen(k_count);
  for (int k = 0; k < k_count; ++k) {
    const Dataset& cam = problem.cameras()[k];
    std::vector<std::pair<int, Homography>> homographies;
    for (const auto& frame : cam.frames) {
      std::vector<Correspondence> corr;
      for (const auto& obs : frame.observations) {
        const WorldPoint& base = problem.base_point(corner_index(problem.target(), obs.corner));
        Eigen::Vector2d image = obs.uv;
        if (have_guess) {
          const Intrinsics& g = options.initial_intrinsics[k];
          try {
            image = undistort_normalized(Eigen::Vector2d((obs.uv.x() - g.ppx) / g.fx, (obs.uv.y() - g.ppy) / g.fy), g);
          } catch (const CalibError&) {
            continue;
          }
        }
        corr.push_back({base.head<2>(), image});
      }
      try {
        if (corr.size() < 4) {
          throw CalibError(ErrorCode::InsufficientData, "fewer than 4 usable observations for initialization");
        }
        homographies.emplace_back(frame_index.at(frame.frame_id), estimate_homography(corr));
      } catch (const CalibError& e) {
        throw CalibError(e.code(), e.what(), frame.frame_id);
      }
    }

    Intrinsics intr;
    if (have_guess) {
      intr = options.initial_intrinsics[k];
    } else {
      std::vector<Homography> hs;
      for (const auto& [j, h] : homographies) hs.push_back(h);
      intr = intrinsics_from_homographies(hs, options.intrinsics_init);
    }
    params.intrinsics.push_back(intr);

    const Intrinsics pose_k = have_guess ? Intrinsics{} : intr;
    for (const auto& [j, h] : homographies) {
      try {
        seen[k][j] = pose_from_homography(h, pose_k);
      } catch (const CalibError& e) {
        throw CalibError(e.code(), e.what(), problem.frame_ids()[j]);
      }
    }
  }

  // Relative camera poses from frames shared with an already placed camera.
  params.camera_poses.assign(k_count, Pose::identity());
  std::vector<bool> placed(k_count, false);
  placed[0] = true;
  bool progress = true;
  while (progress) {
    progress = false;
    for (int k = 1; k < k_count; ++k) {
      if (placed[k]) continue;
      std::vector<Eigen::Matrix3d> rotations;
      Eigen::Vector3d translation = Eigen::Vector3d::Zero();
      for (int m = 0; m < k_count; ++m) {
        if (!placed[m] || m == k) continue;
        for (const auto& [j, pose_k] : seen[k]) {
          const auto it = seen[m].find(j);
          if (it == seen[m].end()) continue;
          // x_k = pose_k X,  x_m = pose_m X = cam_m x_0
          const Pose rel = compose(pose_k, compose(it->second.inverse(), params.camera_poses[m]));
          rotations.push_back(rel.rotation_matrix());
          translation += rel.translation;
        }
        if (!rotations.empty()) break;
      }
      if (rotations.empty()) continue;
      params.camera_poses[k] =
          Pose::from_matrix(mean_rotation(rotations), translation / static_cast<double>(rotations.size()));
      placed[k] = true;
      progress = true;
    }
  }
  // Cameras that share no frame stay at identity; the solver then reports the
  // resulting rank deficiency.

  params.frame_poses.resize(problem.num_frames());
  for (int j = 0; j < problem.num_frames(); ++j) {
    for (int k = 0; k < k_count; ++k) {
      const auto it = seen[k].find(j);
      if (it == seen[k].end()) continue;
      params.frame_poses[j] = compose(params.camera_poses[k].inverse(), it->second);
      break;
    }
  }
  if (problem.static_dofs() > 0) {
    params.static_correction = StaticCorrection::zeros(problem.target(), problem.static_dofs() == 2);
  }
  if (has_dynamic_block(problem.model())) params.betas.assign(problem.num_frames(), ParaboloidCoeffs{});
  return params;
}

CalibrationResult calibrate(const Dataset& dataset, const TargetSpec& spec, DeformationModel model,
                            const SolverConfig& config, const CalibrateOptions& options) {
  return calibrate_multicamera({dataset}, spec, model, config, options);
}

CalibrationResult calibrate_multicamera(const std::vector<Dataset>& cameras, const TargetSpec& spec,
                                        DeformationModel model, const SolverConfig& config,
                                        const CalibrateOptions& options) {
  config.validate();
  ProblemOptions popt;
  popt.anchors = options.anchors;
  const CalibrationProblem problem(cameras, spec, model, popt);
  const ParameterSet init = initialize_parameters(problem, options);
  return solve_lm(problem, problem.pack(init), config);
}

CalibrationResult reduced_calibrate(const Dataset& dataset, const TargetSpec& spec,
                                    const Intrinsics& intrinsics, const StaticCorrection* fixed_correction,
                                    const SolverConfig& config) {
  config.validate();
  if (!intrinsics.is_valid()) throw CalibError(ErrorCode::InvalidArgument, "invalid intrinsics");
  ProblemOptions popt;
  popt.fix_intrinsics = true;
  if (fixed_correction != nullptr) popt.board_correction = *fixed_correction;
  const CalibrationProblem problem(dataset, spec, DeformationModel::Standard, popt);
  CalibrateOptions copt;
  copt.initial_intrinsics = {intrinsics};
  const ParameterSet init = initialize_parameters(problem, copt);
  return solve_lm(problem, problem.pack(init), config);
}

}  // namespace defcalib
