#pragma once

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Core>

#include "defcalib/geometry.hpp"
#include "defcalib/synth.hpp"

namespace defcalib::testing {

inline Intrinsics reference_intrinsics() { return {1000.0, 1010.0, 640.0, 480.0, -0.12, 0.06, -0.01}; }

inline ScenarioConfig small_scenario(std::uint64_t seed, int frames = 25) {
  ScenarioConfig c;
  c.target = {6, 9, 0.1};
  c.intrinsics = reference_intrinsics();
  c.frames = frames;
  c.seed = seed;
  c.poses.distance_min = 1.0;
  c.poses.distance_max = 3.0;
  return c;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline double max_rel_intrinsics_error(const Intrinsics& est, const Intrinsics& truth) {
  const auto e = est.to_array();
  const auto t = truth.to_array();
  double worst = 0.0;
  for (int i = 0; i < Intrinsics::kSize; ++i) {
    // distortion coefficients can be zero; measure them against unit scale
    const double scale = i < 4 ? std::abs(t[i]) : std::max(std::abs(t[i]), 1.0);
    worst = std::max(worst, std::abs(e[i] - t[i]) / scale);
  }
  return worst;
}

// Central differences with one Richardson extrapolation step.
inline Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double step = 1e-4) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x(i)));
    const auto diff = [&](double hh) {
      Eigen::VectorXd xp = x, xm = x;
      xp(i) += hh;
      xm(i) -= hh;
      return Eigen::VectorXd((f(xp) - f(xm)) / (2.0 * hh));
    };
    jac.col(i) = (4.0 * diff(h / 2.0) - diff(h)) / 3.0;
  }
  return jac;
}

// max |a - b| / max(|b|, 1) entrywise
inline double max_relative_deviation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return ((a - b).array().abs() / b.array().abs().max(1.0)).maxCoeff();
}

}  // namespace defcalib::testing

#include "defcalib/solver.hpp"

namespace defcalib::testing {

// Parameters of `truth` laid out for `problem` (single camera, frame ids 0..F-1).
inline ParameterSet truth_parameters(const CalibrationProblem& problem, const GroundTruth& truth) {
  ParameterSet p;
  p.intrinsics = {truth.intrinsics};
  p.camera_poses = {Pose::identity()};
  for (int id : problem.frame_ids()) p.frame_poses.push_back(truth.poses[id]);
  if (problem.static_dofs() > 0) {
    p.static_correction = truth.static_correction
                              ? *truth.static_correction
                              : StaticCorrection::zeros(problem.target(), problem.static_dofs() == 2);
  }
  if (has_dynamic_block(problem.model())) {
    for (int id : problem.frame_ids()) p.betas.push_back(truth.betas.empty() ? ParaboloidCoeffs{} : truth.betas[id]);
  }
  return p;
}

}  // namespace defcalib::testing
