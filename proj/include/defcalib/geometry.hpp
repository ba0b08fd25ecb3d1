#pragma once

#include <array>
#include <span>

#include <Eigen/Core>

namespace defcalib {

using WorldPoint = Eigen::Vector3d;  // meters
using ImagePoint = Eigen::Vector2d;  // pixels

// Pinhole camera with three radial distortion coefficients:
//   u = fx * x/z * D(r) + ppx,  v = fy * y/z * D(r) + ppy
//   D(r) = 1 + k1 r^2 + k2 r^4 + k3 r^6,  r^2 = (x/z)^2 + (y/z)^2
struct Intrinsics {
  static constexpr int kSize = 7;

  double fx = 1.0;
  double fy = 1.0;
  double ppx = 0.0;
  double ppy = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
  double k3 = 0.0;

  // Packing order: fx, fy, ppx, ppy, k1, k2, k3.
  std::array<double, kSize> to_array() const;
  static Intrinsics from_array(std::span<const double, kSize> values);

  bool is_valid() const;
  bool has_distortion() const { return k1 != 0.0 || k2 != 0.0 || k3 != 0.0; }
  double distortion_factor(double r2) const {
    return 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
  }

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

// Rotation vector (axis * angle, radians) and translation (meters). Maps a
// point x to R(rotation) * x + translation.
struct Pose {
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }
  static Pose from_matrix(const Eigen::Matrix3d& rotation_matrix,
                          const Eigen::Vector3d& translation);

  Eigen::Matrix3d rotation_matrix() const;
  Pose inverse() const;
  WorldPoint apply(const WorldPoint& x) const;
};

// a * b: first apply b, then a.
Pose compose(const Pose& a, const Pose& b);

Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& rotation_vector);
// Logarithm of a rotation matrix; the result has norm in [0, pi].
Eigen::Vector3d rotation_vector(const Eigen::Matrix3d& rotation_matrix);
// Equivalent rotation vector with norm <= pi.
Eigen::Vector3d canonical_rotation_vector(const Eigen::Vector3d& rotation_vector);
// Angle (radians) of R_a^T R_b.
double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

// Right Jacobian J_r(w) of SO(3), so that d(R(w) x)/dw = -R(w) [x]_x J_r(w).
Eigen::Matrix3d rotation_right_jacobian(const Eigen::Vector3d& rotation_vector);
Eigen::Matrix3d skew_matrix(const Eigen::Vector3d& v);

// d(R(w) x) / dw evaluated at w = rotation_vector.
Eigen::Matrix3d rotate_point_jacobian(const Eigen::Vector3d& rotation_vector,
                                      const Eigen::Vector3d& x);

WorldPoint transform_to_camera(const WorldPoint& x, const Pose& pose);

struct ProjectionJacobian {
  Eigen::Matrix<double, 2, 3> d_point;                   // d(u,v)/d(x_c)
  Eigen::Matrix<double, 2, Intrinsics::kSize> d_intrinsics;
};

// Throws CalibError(BehindCamera) if x_c.z() <= 0.
ImagePoint project(const WorldPoint& x_c, const Intrinsics& intr);
ImagePoint project(const WorldPoint& x_c, const Intrinsics& intr,
                   ProjectionJacobian* jacobian);

Eigen::Vector2d distort_normalized(const Eigen::Vector2d& p, const Intrinsics& intr);

struct UndistortOptions {
  int max_iterations = 50;
  double tolerance = 1e-10;
};

// Largest undistorted radius on which r * D(r) is strictly increasing, or
// +infinity when the distortion curve is monotone everywhere.
double max_invertible_radius(const Intrinsics& intr);

// Inverse of distort_normalized. Throws CalibError(NonConvergence) when the
// point lies outside the invertible region of the distortion polynomial.
Eigen::Vector2d undistort_normalized(const Eigen::Vector2d& p_distorted,
                                     const Intrinsics& intr,
                                     const UndistortOptions& options = {});

// Camera-frame point at the given depth whose projection is `p`.
WorldPoint unproject_at_depth(const ImagePoint& p, const Intrinsics& intr, double depth,
                              const UndistortOptions& options = {});

}  // namespace defcalib
