#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "test_helpers.hpp"

#include "defcalib/error.hpp"
#include "defcalib/geometry.hpp"

using namespace defcalib;
using defcalib::testing::max_relative_deviation;
using defcalib::testing::numeric_jacobian;

TEST_CASE("transform_to_camera") {
  CHECK((transform_to_camera({1, 2, 3}, Pose::identity()) - Eigen::Vector3d(1, 2, 3)).norm() == 0.0);
  Pose shift;
  shift.translation = {0, 0, 5};
  CHECK((transform_to_camera({0, 0, 0}, shift) - Eigen::Vector3d(0, 0, 5)).norm() == 0.0);
  Pose quarter;
  quarter.rotation = {0, 0, std::numbers::pi / 2};
  CHECK((transform_to_camera({1, 0, 0}, quarter) - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("project evaluates the radial model") {
  Intrinsics k{1200, 1200, 640, 480, 0, 0, 0};
  CHECK((project({0, 0, 2}, k) - Eigen::Vector2d(640, 480)).norm() == 0.0);

  Intrinsics d{1000, 1000, 0, 0, 0.1, 0, 0};
  const ImagePoint p = project({0.2, 0, 1}, d);
  CHECK(p.x() == doctest::Approx(200.8).epsilon(1e-14));
  CHECK(p.y() == 0.0);
}

TEST_CASE("project rejects points behind the camera") {
  Intrinsics k{1000, 1000, 0, 0, 0, 0, 0};
  try {
    project({0, 0, -1}, k);
    FAIL("expected an exception");
  } catch (const CalibError& e) {
    CHECK(e.code() == ErrorCode::BehindCamera);
  }
  CHECK_THROWS_AS(project({0.1, 0, 0}, k), CalibError);
}

TEST_CASE("pinhole projection is depth invariant") {
  Intrinsics k{900, 950, 300, 200, 0, 0, 0};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d x(u(rng), u(rng), 1.5 + u(rng));
    const double lambda = 0.1 + 5 * std::abs(u(rng));
    CHECK((project(lambda * x, k) - project(x, k)).norm() < 1e-9);
  }
}

TEST_CASE("undistort_normalized") {
  Intrinsics none{1000, 1000, 0, 0, 0, 0, 0};
  CHECK((undistort_normalized({0.3, -0.2}, none) - Eigen::Vector2d(0.3, -0.2)).norm() == 0.0);

  Intrinsics k1{1000, 1000, 0, 0, 0.1, 0, 0};
  const Eigen::Vector2d p(0.1, 0.05);
  CHECK((undistort_normalized(distort_normalized(p, k1), k1) - p).norm() < 1e-10);

  SUBCASE("points past the distortion maximum do not converge") {
    Intrinsics barrel{1000, 1000, 0, 0, -0.5, 0, 0};
    // r (1 - 0.5 r^2) peaks at r = sqrt(2/3); scan to find the peak value independently
    double peak = 0.0;
    for (double r = 0.0; r < 2.0; r += 1e-5) peak = std::max(peak, r * (1 - 0.5 * r * r));
    CHECK(max_invertible_radius(barrel) == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    try {
      undistort_normalized({peak * 1.2, 0.0}, barrel);
      FAIL("expected non-convergence");
    } catch (const CalibError& e) {
      CHECK(e.code() == ErrorCode::NonConvergence);
    }
    const Eigen::Vector2d inside(0.4 * std::cos(0.3), 0.4 * std::sin(0.3));
    CHECK((distort_normalized(undistort_normalized(distort_normalized(inside, barrel), barrel), barrel) -
           distort_normalized(inside, barrel))
              .norm() < 1e-10);
  }
}

TEST_CASE("undistortion round trip over the invertible region") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 40; ++trial) {
    Intrinsics k{1000, 1000, 0, 0, -0.4 + 0.8 * u(rng), -0.2 + 0.4 * u(rng), -0.1 + 0.2 * u(rng)};
    const double r_max = std::min(max_invertible_radius(k), 1.2);
    for (int i = 0; i < 50; ++i) {
      const double r = 0.98 * r_max * u(rng);
      const double phi = 2 * std::numbers::pi * u(rng);
      const Eigen::Vector2d p(r * std::cos(phi), r * std::sin(phi));
      const Eigen::Vector2d pd = distort_normalized(p, k);
      const Eigen::Vector2d q = undistort_normalized(pd, k);
      REQUIRE((distort_normalized(q, k) - pd).norm() < 1e-10);
    }
  }
}

TEST_CASE("unproject_at_depth") {
  Intrinsics k{1200, 1200, 640, 480, 0, 0, 0};
  CHECK((unproject_at_depth({640, 480}, k, 1.0) - Eigen::Vector3d(0, 0, 1)).norm() == 0.0);
  Intrinsics k2{1000, 1000, 640, 480, 0, 0, 0};
  CHECK((unproject_at_depth({740, 480}, k2, 2.0) - Eigen::Vector3d(0.2, 0, 2)).norm() < 1e-15);

  const Intrinsics d = testing::reference_intrinsics();
  for (double u = 0; u < 1280; u += 97.3) {
    for (double v = 0; v < 960; v += 81.7) {
      const WorldPoint x = unproject_at_depth({u, v}, d, 2.5);
      CHECK(x.z() == 2.5);
      CHECK((project(x, d) - Eigen::Vector2d(u, v)).norm() < 1e-8);
    }
  }
}

TEST_CASE("rotation vectors and poses") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 200; ++i) {
    Pose p;
    p.rotation = Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized() * (std::numbers::pi * std::abs(u(rng)));
    p.translation = {u(rng), u(rng), u(rng)};
    const Eigen::Vector3d x(u(rng), u(rng), u(rng));
    CHECK((p.inverse().apply(p.apply(x)) - x).norm() < 1e-12);
    const Pose id = compose(p.inverse(), p);
    CHECK(id.rotation.norm() < 1e-12);
    CHECK(id.translation.norm() < 1e-12);
    CHECK(rotation_angle_between(rotation_matrix(rotation_vector(p.rotation_matrix())), p.rotation_matrix()) < 1e-12);
    CHECK(rotation_vector(p.rotation_matrix()).norm() <= std::numbers::pi + 1e-12);
  }
  // a rotation by 3*pi/2 about z is canonicalized to -pi/2
  const Eigen::Vector3d w = canonical_rotation_vector({0, 0, 1.5 * std::numbers::pi});
  CHECK((w - Eigen::Vector3d(0, 0, -0.5 * std::numbers::pi)).norm() < 1e-12);
}

TEST_CASE("rotation jacobian matches finite differences") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d x(u(rng), u(rng), u(rng));
    const double angle = i < 5 ? 1e-7 * i : 3.0 * std::abs(u(rng));
    const Eigen::Vector3d w = Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized() * angle;
    const auto f = [&](const Eigen::VectorXd& ww) -> Eigen::VectorXd {
      return rotation_matrix(Eigen::Vector3d(ww)) * x;
    };
    CHECK(max_relative_deviation(rotate_point_jacobian(w, x), numeric_jacobian(f, w, 1e-3)) < 1e-8);
  }
}

TEST_CASE("projection jacobian matches finite differences") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    Intrinsics k{900 + 200 * u(rng), 900 + 200 * u(rng), 640 + 50 * u(rng), 480 + 50 * u(rng),
                 0.2 * u(rng), 0.1 * u(rng), 0.05 * u(rng)};
    const Eigen::Vector3d x(0.5 * u(rng), 0.5 * u(rng), 1.5 + u(rng));
    ProjectionJacobian jac;
    project(x, k, &jac);
    const auto fp = [&](const Eigen::VectorXd& xx) -> Eigen::VectorXd { return project(Eigen::Vector3d(xx), k); };
    CHECK(max_relative_deviation(jac.d_point, numeric_jacobian(fp, x)) < 1e-5);
    const auto arr = k.to_array();
    const Eigen::VectorXd theta = Eigen::Map<const Eigen::VectorXd>(arr.data(), 7);
    const auto fk = [&](const Eigen::VectorXd& t) -> Eigen::VectorXd {
      return project(x, Intrinsics::from_array(std::span<const double, 7>(t.data(), 7)));
    };
    CHECK(max_relative_deviation(jac.d_intrinsics, numeric_jacobian(fk, theta, 1e-3)) < 1e-5);
  }
}

TEST_CASE("intrinsics validity") {
  CHECK(Intrinsics{1, 1, 0, 0, 0, 0, 0}.is_valid());
  CHECK_FALSE(Intrinsics{0, 1, 0, 0, 0, 0, 0}.is_valid());
  CHECK_FALSE(Intrinsics{1, -1, 0, 0, 0, 0, 0}.is_valid());
  CHECK_FALSE(Intrinsics{1, 1, std::nan(""), 0, 0, 0, 0}.is_valid());
  const Intrinsics k = testing::reference_intrinsics();
  const auto a = k.to_array();
  CHECK(Intrinsics::from_array(a) == k);
}
