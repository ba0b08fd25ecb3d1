#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "doctest.h"
#include "test_helpers.hpp"

#include "defcalib/error.hpp"
#include "defcalib/metrics.hpp"
#include "defcalib/solver.hpp"
#include "defcalib/synth.hpp"

using namespace defcalib;
using defcalib::testing::max_rel_intrinsics_error;
using defcalib::testing::small_scenario;
using defcalib::testing::truth_parameters;

namespace {

const DeformationModel kModels[] = {DeformationModel::Standard, DeformationModel::Static3D,
                                    DeformationModel::DynamicParaboloid, DeformationModel::FullInPlanePlusDynamic};

ScenarioConfig regime_scenario(DeformationModel model, std::uint64_t seed, int frames = 25) {
  ScenarioConfig c = small_scenario(seed, frames);
  switch (model) {
    case DeformationModel::Standard: c.deformation.regime = DeformationRegime::None; break;
    case DeformationModel::Static3D: c.deformation.regime = DeformationRegime::Static3D; break;
    case DeformationModel::DynamicParaboloid: c.deformation.regime = DeformationRegime::Dynamic; break;
    case DeformationModel::FullInPlanePlusDynamic: c.deformation.regime = DeformationRegime::Full; break;
  }
  c.deformation.static_amplitude = 0.001;
  c.deformation.dynamic_min_amplitude = 0.001;
  c.deformation.dynamic_amplitude = 0.003;
  return c;
}

}  // namespace

TEST_CASE("residuals vanish at the generating parameters") {
  for (auto model : kModels) {
    CAPTURE(to_string(model));
    const Scenario s = generate_scenario(regime_scenario(model, 3));
    const CalibrationProblem problem(s.dataset, s.truth.poses.empty() ? TargetSpec{} : TargetSpec{6, 9, 0.1}, model);
    const Eigen::VectorXd r = residuals(problem, problem.pack(truth_parameters(problem, s.truth)));
    CHECK(r.size() == 2 * static_cast<Eigen::Index>(s.dataset.observation_count()));
    CHECK(r.lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("a frame's translation only affects its residual block") {
  const Scenario s = generate_scenario(small_scenario(5, 6));
  const CalibrationProblem problem(s.dataset, {6, 9, 0.1}, DeformationModel::Standard);
  const Eigen::VectorXd x = problem.pack(truth_parameters(problem, s.truth));
  Eigen::VectorXd y = x;
  const int frame = 3;
  y(problem.frame_pose_offset(frame) + 4) += 0.01;
  const Eigen::VectorXd diff = residuals(problem, y) - residuals(problem, x);
  for (int k = 0; k < problem.num_observations(); ++k) {
    const double d = diff.segment<2>(2 * k).norm();
    if (problem.observations()[k].frame == frame) {
      CHECK(d > 0.0);
    } else {
      CHECK(d == 0.0);
    }
  }
}

TEST_CASE("problem construction validates observations") {
  Dataset d;
  d.frames.push_back({0, {{CornerId{9, 0}, {1, 1}}}});
  try {
    CalibrationProblem p(d, {6, 9, 0.1}, DeformationModel::Standard);
    FAIL("expected an error");
  } catch (const CalibError& e) {
    CHECK(e.code() == ErrorCode::OutOfRange);
  }
  Dataset dup;
  dup.frames.push_back({0, {{CornerId{1, 1}, {1, 1}}, {CornerId{1, 1}, {2, 2}}}});
  CHECK_THROWS_AS(CalibrationProblem(dup, {6, 9, 0.1}, DeformationModel::Standard), CalibError);
  CHECK_THROWS_AS(CalibrationProblem(Dataset{}, {6, 9, 0.1}, DeformationModel::Standard), CalibError);
}

TEST_CASE("parameter layout") {
  const Scenario s = generate_scenario(small_scenario(6, 4));
  const TargetSpec spec{6, 9, 0.1};
  const CalibrationProblem standard(s.dataset, spec, DeformationModel::Standard);
  CHECK(standard.num_parameters() == 7 + 6 * 4);
  CHECK(standard.num_free_parameters() == standard.num_parameters());

  const CalibrationProblem stat(s.dataset, spec, DeformationModel::Static3D);
  CHECK(stat.num_parameters() == 7 + 24 + 3 * 54);
  CHECK(stat.num_free_parameters() == stat.num_parameters() - 7);
  for (int m : stat.gauge_mask()) CHECK(stat.free_columns()[stat.static_offset() + m] == -1);

  const CalibrationProblem dyn(s.dataset, spec, DeformationModel::DynamicParaboloid);
  CHECK(dyn.num_parameters() == 7 + 24 + 3 * 4);
  CHECK(dyn.num_free_parameters() == dyn.num_parameters());

  const CalibrationProblem full(s.dataset, spec, DeformationModel::FullInPlanePlusDynamic);
  CHECK(full.num_parameters() == 7 + 24 + 2 * 54 + 3 * 4);
  CHECK(full.num_free_parameters() == full.num_parameters() - 4);

  ProblemOptions fixed;
  fixed.fix_intrinsics = true;
  const CalibrationProblem reduced(s.dataset, spec, DeformationModel::Standard, fixed);
  CHECK(reduced.num_free_parameters() == 24);

  // pack/unpack round trip
  const ParameterSet p = truth_parameters(full, s.truth);
  CHECK((full.pack(full.unpack(full.pack(p))) - full.pack(p)).norm() == 0.0);
  CHECK(full.describe_parameter(full.frame_pose_offset(2) + 5) == "frame_pose[2].tz");
  CHECK(full.describe_parameter(0) == "intrinsics[0].fx");
}

TEST_CASE("analytic jacobian matches finite differences") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto model : kModels) {
    for (int trial = 0; trial < 5; ++trial) {
      CAPTURE(to_string(model));
      CAPTURE(trial);
      ScenarioConfig c = regime_scenario(model, 100 + trial, 3);
      c.target = {3, 3, 0.15};
      const Scenario s = generate_scenario(c);
      const CalibrationProblem problem(s.dataset, c.target, model);
      Eigen::VectorXd x = problem.pack(truth_parameters(problem, s.truth));
      // move away from the optimum so every term is exercised
      for (int i = 0; i < x.size(); ++i) x(i) += 1e-3 * u(rng) * std::max(1.0, std::abs(x(i)));
      const Eigen::MatrixXd analytic = Eigen::MatrixXd(jacobian(problem, x));
      CHECK(analytic.cols() == problem.num_free_parameters());

      const auto& cols = problem.free_columns();
      Eigen::VectorXd free(problem.num_free_parameters());
      for (int i = 0; i < problem.num_parameters(); ++i) {
        if (cols[i] >= 0) free(cols[i]) = x(i);
      }
      const auto f = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
        Eigen::VectorXd full = x;
        for (int i = 0; i < problem.num_parameters(); ++i) {
          if (cols[i] >= 0) full(i) = z(cols[i]);
        }
        return residuals(problem, full);
      };
      // residuals are observed minus predicted
      CHECK(testing::max_relative_deviation(analytic, testing::numeric_jacobian(f, free, 1e-5)) < 1e-5);
    }
  }
}

TEST_CASE("jacobian sparsity follows the problem structure") {
  ScenarioConfig c = regime_scenario(DeformationModel::FullInPlanePlusDynamic, 8, 3);
  const Scenario s = generate_scenario(c);
  const CalibrationProblem problem(s.dataset, c.target, DeformationModel::FullInPlanePlusDynamic);
  const Eigen::MatrixXd j = Eigen::MatrixXd(jacobian(problem, problem.pack(truth_parameters(problem, s.truth))));
  const auto& cols = problem.free_columns();
  for (int k = 0; k < problem.num_observations(); ++k) {
    const auto& obs = problem.observations()[k];
    for (int i = 0; i < problem.num_parameters(); ++i) {
      if (cols[i] < 0) continue;
      bool structural = i < 7;
      structural |= i >= problem.frame_pose_offset(obs.frame) && i < problem.frame_pose_offset(obs.frame) + 6;
      structural |= i >= problem.static_offset() + 2 * obs.corner && i < problem.static_offset() + 2 * obs.corner + 2;
      structural |= i >= problem.dynamic_offset(obs.frame) && i < problem.dynamic_offset(obs.frame) + 3;
      if (!structural) REQUIRE(j.block(2 * k, cols[i], 2, 1).norm() == 0.0);
    }
  }
}

TEST_CASE("solver at the optimum") {
  const Scenario s = generate_scenario(small_scenario(2));
  const CalibrationProblem problem(s.dataset, {6, 9, 0.1}, DeformationModel::Standard);
  const CalibrationResult r = solve_lm(problem, problem.pack(truth_parameters(problem, s.truth)), {});
  CHECK(r.status == SolverStatus::Converged);
  CHECK(r.accepted_steps <= 1);
  CHECK(r.final_cost < 1e-16);
}

TEST_CASE("noiseless standard calibration from closed-form initialization") {
  const Scenario s = generate_scenario(small_scenario(1));
  const CalibrationResult r = calibrate(s.dataset, {6, 9, 0.1}, DeformationModel::Standard, {});
  CHECK(r.ok());
  CHECK(r.rmse < 1e-6);
  CHECK(max_rel_intrinsics_error(r.intrinsics(), s.truth.intrinsics) < 1e-6);
  CHECK(r.parameters.betas.empty());
  CHECK_FALSE(r.parameters.static_correction.has_value());
}

TEST_CASE("cost bookkeeping") {
  ScenarioConfig c = regime_scenario(DeformationModel::FullInPlanePlusDynamic, 4);
  c.noise_sigma = 0.2;
  const Scenario s = generate_scenario(c);
  for (auto model : kModels) {
    const CalibrationResult r = calibrate(s.dataset, c.target, model, {});
    CHECK(r.ok());
    for (std::size_t i = 1; i < r.cost_trace.size(); ++i) CHECK(r.cost_trace[i] <= r.cost_trace[i - 1]);
    CHECK(r.final_cost == doctest::Approx(r.residuals.squaredNorm()).epsilon(1e-12));
    CHECK(r.rmse * r.rmse * r.residuals.size() == doctest::Approx(r.final_cost).epsilon(1e-12));
    CHECK(training_rmse(r) == doctest::Approx(r.rmse).epsilon(1e-14));
  }
}

TEST_CASE("under-determined problems are reported as rank deficient") {
  const Scenario s = generate_scenario(small_scenario(9, 3));
  const TargetSpec spec{6, 9, 0.1};
  const Dataset one = s.dataset.subset(std::vector<int>{0});
  const CalibrationProblem problem(one, spec, DeformationModel::Standard);
  // a single view of a plane fixes 8 of the 10 pinhole and pose parameters
  CalibrateOptions opt;
  opt.initial_intrinsics = {Intrinsics{1000, 1000, 640, 480, 0, 0, 0}};
  const CalibrationResult r = solve_lm(problem, problem.pack(initialize_parameters(problem, opt)), {});
  CHECK(r.status == SolverStatus::RankDeficient);
  CHECK(r.message.find("intrinsics[0]") != std::string::npos);
  CHECK_THROWS_AS(calibrate(one, spec, DeformationModel::Standard, {}), CalibError);
}

TEST_CASE("dynamic model recovers per-frame deformation") {
  ScenarioConfig c = regime_scenario(DeformationModel::DynamicParaboloid, 12);
  const Scenario s = generate_scenario(c);
  const CalibrationResult r = calibrate(s.dataset, c.target, DeformationModel::DynamicParaboloid, {});
  REQUIRE(r.ok());
  CHECK(r.rmse < 1e-6);
  CHECK(max_rel_intrinsics_error(r.intrinsics(), s.truth.intrinsics) < 1e-5);
  REQUIRE(r.parameters.betas.size() == s.truth.betas.size());
  for (std::size_t j = 0; j < s.truth.betas.size(); ++j) {
    const Eigen::Vector3d t = s.truth.betas[j].as_vector();
    CHECK((r.parameters.betas[j].as_vector() - t).norm() / t.norm() < 0.05);
  }
}

TEST_CASE("static optimum does not depend on the gauge anchors") {
  ScenarioConfig c = regime_scenario(DeformationModel::Static3D, 21);
  c.noise_sigma = 0.1;
  const Scenario s = generate_scenario(c);
  const GaugeAnchors choices[] = {GaugeAnchors::defaults(c.target), {10, 16, 40}, {53, 45, 4}, {20, 22, 49}};
  std::vector<CalibrationResult> results;
  for (const auto& a : choices) {
    CalibrateOptions opt;
    opt.anchors = a;
    results.push_back(calibrate(s.dataset, c.target, DeformationModel::Static3D, {}, opt));
    REQUIRE(results.back().ok());
  }
  for (std::size_t i = 1; i < results.size(); ++i) {
    CHECK(std::abs(results[i].final_cost - results[0].final_cost) / results[0].final_cost < 1e-9);
  }
}

TEST_CASE("static gauge anchors on noiseless data give the same intrinsics") {
  ScenarioConfig c = regime_scenario(DeformationModel::Static3D, 22);
  const Scenario s = generate_scenario(c);
  CalibrateOptions a, b;
  a.anchors = GaugeAnchors{10, 16, 40};
  b.anchors = GaugeAnchors{53, 45, 4};
  const auto ra = calibrate(s.dataset, c.target, DeformationModel::Static3D, {}, a);
  const auto rb = calibrate(s.dataset, c.target, DeformationModel::Static3D, {}, b);
  CHECK(max_rel_intrinsics_error(ra.intrinsics(), rb.intrinsics()) < 1e-6);
}

TEST_CASE("schur and dense normal equations agree") {
  ScenarioConfig c = regime_scenario(DeformationModel::FullInPlanePlusDynamic, 30);
  c.noise_sigma = 0.1;
  const Scenario s = generate_scenario(c);
  for (auto model : kModels) {
    SolverConfig dense, schur;
    schur.linear_solver = LinearSolverKind::SchurFrames;
    const auto a = calibrate(s.dataset, c.target, model, dense);
    const auto b = calibrate(s.dataset, c.target, model, schur);
    CHECK(a.final_cost == doctest::Approx(b.final_cost).epsilon(1e-9));
    CHECK(max_rel_intrinsics_error(a.intrinsics(), b.intrinsics()) < 1e-7);
  }
}

TEST_CASE("reduced calibration") {
  ScenarioConfig c = small_scenario(40, 20);
  c.poses = PoseSampling{};
  const Scenario clean = generate_scenario(c);
  const auto exact = reduced_calibrate(clean.dataset, c.target, c.intrinsics, nullptr, {});
  CHECK(exact.rmse < 1e-6);
  CHECK(exact.intrinsics() == c.intrinsics);

  c.noise_sigma = 0.1;
  const Scenario noisy = generate_scenario(c);
  const auto floor = reduced_calibrate(noisy.dataset, c.target, c.intrinsics, nullptr, {});
  CHECK(floor.rmse == doctest::Approx(0.1).epsilon(0.15));

  Intrinsics wrong = c.intrinsics;
  wrong.fx *= 1.01;
  const double inflated = reduced_calibrate(noisy.dataset, c.target, wrong, nullptr, {}).rmse;
  CAPTURE(inflated);
  CHECK(inflated > 0.3);
}

TEST_CASE("reduced calibration with a fixed static correction") {
  ScenarioConfig c = regime_scenario(DeformationModel::Static3D, 41);
  const Scenario s = generate_scenario(c);
  const auto with = reduced_calibrate(s.dataset, c.target, c.intrinsics, &*s.truth.static_correction, {});
  const auto without = reduced_calibrate(s.dataset, c.target, c.intrinsics, nullptr, {});
  CHECK(with.rmse < 1e-6);
  CHECK(without.rmse > 1e-3);
}

TEST_CASE("multi-camera calibration") {
  ScenarioConfig base = small_scenario(50, 20);
  base.poses.distance_min = 1.5;
  base.poses.min_visible_fraction = 0.5;
  base.poses.center_region = 0.5;

  SUBCASE("a single camera reduces to the monocular problem") {
    const Scenario s = generate_scenario(base);
    const auto mono = calibrate(s.dataset, base.target, DeformationModel::DynamicParaboloid, {});
    const auto multi = calibrate_multicamera({s.dataset}, base.target, DeformationModel::DynamicParaboloid, {});
    CHECK(multi.final_cost == doctest::Approx(mono.final_cost).epsilon(1e-12));
    CHECK(max_rel_intrinsics_error(multi.intrinsics(), mono.intrinsics()) < 1e-12);
  }

  SUBCASE("a noiseless rig recovers the relative pose") {
    RigConfig rig;
    rig.scenario = base;
    rig.scenario.deformation.regime = DeformationRegime::Dynamic;
    rig.scenario.deformation.dynamic_min_amplitude = 0.001;
    rig.scenario.deformation.dynamic_amplitude = 0.003;
    rig.intrinsics = {base.intrinsics, Intrinsics{950, 955, 650, 470, -0.08, 0.02, 0.0}};
    Pose second;
    second.rotation = {0.02, -0.1, 0.01};
    second.translation = {-0.2, 0.01, 0.02};
    rig.camera_poses = {Pose::identity(), second};
    const RigScenario s = generate_rig_scenario(rig);
    const auto r = calibrate_multicamera(s.cameras, base.target, DeformationModel::DynamicParaboloid, {});
    REQUIRE(r.ok());
    const Pose est = r.parameters.camera_poses[1];
    CHECK(rotation_angle_between(est.rotation_matrix(), second.rotation_matrix()) < 1e-6);
    CHECK((est.translation - second.translation).norm() < 1e-8);
    for (int k = 0; k < 2; ++k) CHECK(max_rel_intrinsics_error(r.parameters.intrinsics[k], rig.intrinsics[k]) < 1e-6);
    for (std::size_t j = 0; j < s.betas.size(); ++j) {
      const Eigen::Vector3d t = s.betas[j].as_vector();
      CHECK((r.parameters.betas[j].as_vector() - t).norm() / t.norm() < 0.05);
    }
  }

  SUBCASE("cameras without shared frames are unobservable") {
    RigConfig rig;
    rig.scenario = base;
    rig.intrinsics = {base.intrinsics, base.intrinsics};
    Pose second;
    second.translation = {-0.2, 0, 0};
    rig.camera_poses = {Pose::identity(), second};
    RigScenario s = generate_rig_scenario(rig);
    for (auto& f : s.cameras[1].frames) f.frame_id += 1000;
    const auto r = calibrate_multicamera(s.cameras, base.target, DeformationModel::Standard, {});
    CHECK(r.status == SolverStatus::RankDeficient);
    CHECK(r.message.find("camera_pose[1]") != std::string::npos);
  }
}

TEST_CASE("cauchy kernel suppresses gross outliers") {
  ScenarioConfig c = small_scenario(60);
  const Scenario s = generate_scenario(c);
  Dataset corrupted = s.dataset;
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> angle(0, 2 * std::numbers::pi);
  std::bernoulli_distribution pick(0.05);
  for (auto& f : corrupted.frames) {
    for (auto& o : f.observations) {
      if (pick(rng)) {
        const double a = angle(rng);
        o.uv += 50.0 * Eigen::Vector2d(std::cos(a), std::sin(a));
      }
    }
  }
  SolverConfig robust;
  robust.kernel = RobustKernel::Cauchy;
  const auto clean = calibrate(s.dataset, c.target, DeformationModel::Standard, robust);
  const auto rob = calibrate(corrupted, c.target, DeformationModel::Standard, robust);
  const auto plain = calibrate(corrupted, c.target, DeformationModel::Standard, {});
  const double rob_dev = max_rel_intrinsics_error(rob.intrinsics(), clean.intrinsics());
  const double plain_dev = max_rel_intrinsics_error(plain.intrinsics(), clean.intrinsics());
  CHECK(rob_dev < 1e-3);
  CHECK(plain_dev > rob_dev);
}

TEST_CASE("configuration validation") {
  SolverConfig c;
  CHECK_NOTHROW(c.validate());
  c.max_iterations = 0;
  CHECK_THROWS_AS(c.validate(), CalibError);
  c = {};
  c.kernel_scale = 0;
  CHECK_THROWS_AS(c.validate(), CalibError);
  c = {};
  c.damping_increase = 1.0;
  CHECK_THROWS_AS(c.validate(), CalibError);
  CHECK(parse_robust_kernel("cauchy") == RobustKernel::Cauchy);
  CHECK_THROWS_AS(parse_robust_kernel("huber"), CalibError);
}

TEST_CASE("initialization errors carry the frame") {
  const Scenario s = generate_scenario(small_scenario(70, 5));
  Dataset bad = s.dataset;
  // keep only one row of corners in frame 2: collinear
  auto& obs = bad.frames[2].observations;
  obs.erase(std::remove_if(obs.begin(), obs.end(), [](const Observation& o) { return o.corner.m != 0; }), obs.end());
  try {
    calibrate(bad, {6, 9, 0.1}, DeformationModel::Standard, {});
    FAIL("expected an error");
  } catch (const CalibError& e) {
    CHECK(e.frame() == 2);
    CHECK(e.code() == ErrorCode::DegenerateConfiguration);
  }
}

TEST_CASE("numeric jacobian mode agrees with the analytic one") {
  for (auto model : kModels) {
    CAPTURE(to_string(model));
    ScenarioConfig c = regime_scenario(model, 140, 6);
    c.noise_sigma = 0.2;
    const Scenario s = generate_scenario(c);
    const CalibrationProblem problem(s.dataset, c.target, model);
    const Eigen::VectorXd x = problem.pack(truth_parameters(problem, s.truth));
    const Eigen::MatrixXd a(jacobian(problem, x));
    const Eigen::MatrixXd n(jacobian(problem, x, JacobianMode::Numeric));
    CHECK(testing::max_relative_deviation(n, a) < 1e-5);

    SolverConfig numeric;
    numeric.jacobian = JacobianMode::Numeric;
    const auto ra = calibrate(s.dataset, c.target, model, {});
    const auto rn = calibrate(s.dataset, c.target, model, numeric);
    REQUIRE(rn.ok());
    CHECK(rn.final_cost == doctest::Approx(ra.final_cost).epsilon(1e-8));
    CHECK(max_rel_intrinsics_error(rn.intrinsics(), ra.intrinsics()) < 1e-6);
  }
  CHECK(parse_jacobian_mode("numeric") == JacobianMode::Numeric);
  CHECK_THROWS_AS(parse_jacobian_mode("symbolic"), CalibError);
}
