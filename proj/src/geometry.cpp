#include "defcalib/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "defcalib/error.hpp"

namespace defcalib {

namespace {

bool finite(const Eigen::Vector2d& p) { return std::isfinite(p.x()) && std::isfinite(p.y()); }

}  // namespace

Eigen::Matrix3d skew_matrix(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

std::array<double, Intrinsics::kSize> Intrinsics::to_array() const {
  return {fx, fy, ppx, ppy, k1, k2, k3};
}

Intrinsics Intrinsics::from_array(std::span<const double, kSize> v) {
  return Intrinsics{v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
}

bool Intrinsics::is_valid() const {
  for (double v : to_array()) {
    if (!std::isfinite(v)) return false;
  }
  return fx > 0.0 && fy > 0.0;
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta < 1e-8) {
    const Eigen::Matrix3d k = skew_matrix(w);
    return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  }
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Eigen::Vector3d rotation_vector(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return canonical_rotation_vector(aa.angle() * aa.axis());
}

Eigen::Vector3d canonical_rotation_vector(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta <= std::numbers::pi) return w;
  const double wrapped = std::remainder(theta, 2.0 * std::numbers::pi);  // in [-pi, pi]
  return w * (wrapped / theta);
}

double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return rotation_vector(a.transpose() * b).norm();
}

Eigen::Matrix3d rotation_right_jacobian(const Eigen::Vector3d& w) {
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);
  double c1 = 0.0;  // (1 - cos t) / t^2
  double c2 = 0.0;  // (t - sin t) / t^3
  if (theta < 1e-4) {
    c1 = 0.5 - theta2 / 24.0;
    c2 = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    c1 = (1.0 - std::cos(theta)) / theta2;
    c2 = (theta - std::sin(theta)) / (theta2 * theta);
  }
  const Eigen::Matrix3d k = skew_matrix(w);
  return Eigen::Matrix3d::Identity() - c1 * k + c2 * k * k;
}

Eigen::Matrix3d rotate_point_jacobian(const Eigen::Vector3d& w, const Eigen::Vector3d& x) {
  return -rotation_matrix(w) * skew_matrix(x) * rotation_right_jacobian(w);
}

Pose Pose::from_matrix(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
  return Pose{rotation_vector(r), t};
}

Eigen::Matrix3d Pose::rotation_matrix() const { return defcalib::rotation_matrix(rotation); }

Pose Pose::inverse() const {
  const Eigen::Matrix3d rt = rotation_matrix().transpose();
  return Pose{canonical_rotation_vector(-rotation), -rt * translation};
}

WorldPoint Pose::apply(const WorldPoint& x) const {
  return rotation_matrix() * x + translation;
}

Pose compose(const Pose& a, const Pose& b) {
  const Eigen::Matrix3d ra = a.rotation_matrix();
  return Pose::from_matrix(ra * b.rotation_matrix(), ra * b.translation + a.translation);
}

WorldPoint transform_to_camera(const WorldPoint& x, const Pose& pose) { return pose.apply(x); }

ImagePoint project(const WorldPoint& x_c, const Intrinsics& intr) {
  return project(x_c, intr, nullptr);
}

ImagePoint project(const WorldPoint& x_c, const Intrinsics& intr, ProjectionJacobian* jac) {
  if (!(x_c.z() > 0.0)) {
    throw CalibError(ErrorCode::BehindCamera, "point has non-positive depth");
  }
  const double inv_z = 1.0 / x_c.z();
  const double xn = x_c.x() * inv_z;
  const double yn = x_c.y() * inv_z;
  const double r2 = xn * xn + yn * yn;
  const double d = intr.distortion_factor(r2);
  const ImagePoint uv(intr.fx * xn * d + intr.ppx, intr.fy * yn * d + intr.ppy);
  if (jac == nullptr) return uv;

  const double r4 = r2 * r2;
  const double dd_dr2 = intr.k1 + 2.0 * intr.k2 * r2 + 3.0 * intr.k3 * r4;
  Eigen::Matrix2d d_norm;  // d(u,v) / d(xn,yn)
  d_norm(0, 0) = intr.fx * (d + 2.0 * xn * xn * dd_dr2);
  d_norm(0, 1) = intr.fx * 2.0 * xn * yn * dd_dr2;
  d_norm(1, 0) = intr.fy * 2.0 * xn * yn * dd_dr2;
  d_norm(1, 1) = intr.fy * (d + 2.0 * yn * yn * dd_dr2);
  Eigen::Matrix<double, 2, 3> dn_dx;
  dn_dx << inv_z, 0.0, -xn * inv_z,
           0.0, inv_z, -yn * inv_z;
  jac->d_point = d_norm * dn_dx;

  auto& di = jac->d_intrinsics;
  di.setZero();
  di(0, 0) = xn * d;
  di(1, 1) = yn * d;
  di(0, 2) = 1.0;
  di(1, 3) = 1.0;
  di(0, 4) = intr.fx * xn * r2;
  di(1, 4) = intr.fy * yn * r2;
  di(0, 5) = intr.fx * xn * r4;
  di(1, 5) = intr.fy * yn * r4;
  di(0, 6) = intr.fx * xn * r4 * r2;
  di(1, 6) = intr.fy * yn * r4 * r2;
  return uv;
}

Eigen::Vector2d distort_normalized(const Eigen::Vector2d& p, const Intrinsics& intr) {
  return p * intr.distortion_factor(p.squaredNorm());
}

double max_invertible_radius(const Intrinsics& intr) {
  // d(r D(r))/dr = 1 + 3 k1 s + 5 k2 s^2 + 7 k3 s^3 with s = r^2.
  std::vector<double> coeffs = {1.0, 3.0 * intr.k1, 5.0 * intr.k2, 7.0 * intr.k3};
  while (coeffs.size() > 1 && coeffs.back() == 0.0) coeffs.pop_back();
  const int degree = static_cast<int>(coeffs.size()) - 1;
  if (degree == 0) return std::numeric_limits<double>::infinity();

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 0; i < degree; ++i) {
    companion(0, i) = -coeffs[degree - 1 - i] / coeffs[degree];
  }
  for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  const Eigen::VectorXcd roots = Eigen::EigenSolver<Eigen::MatrixXd>(companion, false).eigenvalues();

  double smallest = std::numeric_limits<double>::infinity();
  for (const auto& root : roots) {
    if (std::abs(root.imag()) > 1e-9 * std::max(1.0, std::abs(root.real()))) continue;
    if (root.real() > 0.0) smallest = std::min(smallest, root.real());
  }
  return std::isfinite(smallest) ? std::sqrt(smallest) : smallest;
}

Eigen::Vector2d undistort_normalized(const Eigen::Vector2d& pd, const Intrinsics& intr,
                                     const UndistortOptions& options) {
  if (!intr.has_distortion()) return pd;
  const double rd = pd.norm();
  if (rd == 0.0) return pd;

  const double r_max = max_invertible_radius(intr);
  const auto radial = [&](double r) { return r * intr.distortion_factor(r * r) - rd; };
  const auto radial_slope = [&](double r) {
    const double s = r * r;
    return 1.0 + s * (3.0 * intr.k1 + s * (5.0 * intr.k2 + s * 7.0 * intr.k3));
  };

  // Damped fixed-point iteration p <- p_d / D(|p|).
  double start = rd;
  {
    Eigen::Vector2d p = pd;
    double alpha = 1.0;
    double previous = std::numeric_limits<double>::infinity();
    for (int it = 0; it < options.max_iterations; ++it) {
      const double err = (distort_normalized(p, intr) - pd).norm();
      if (!std::isfinite(err)) break;
      if (err <= options.tolerance) {
        if (p.norm() <= r_max) start = p.norm();
        break;
      }
      if (err > previous) alpha *= 0.5;
      previous = err;
      p += alpha * (pd / intr.distortion_factor(p.squaredNorm()) - p);
      if (!finite(p)) break;
    }
  }

  // Safeguarded Newton on the radius, restricted to the monotone branch.
  double lo = 0.0;
  double hi = r_max;
  if (!std::isfinite(hi)) {
    hi = std::max(1.0, rd);
    for (int i = 0; i < 64 && radial(hi) < 0.0; ++i) hi *= 2.0;
  }
  if (radial(hi) < 0.0) {
    throw CalibError(ErrorCode::NonConvergence,
                     "distorted point lies outside the invertible region of the distortion model");
  }
  double r = std::clamp(start, lo, hi);
  double best_r = r;
  double best_g = std::abs(radial(r));
  for (int it = 0; it < options.max_iterations && best_g > 0.0; ++it) {
    const double g = radial(r);
    if (std::abs(g) < best_g) {
      best_g = std::abs(g);
      best_r = r;
    }
    if (g == 0.0) break;
    if (g > 0.0) hi = r; else lo = r;
    const double slope = radial_slope(r);
    double next = slope > 0.0 ? r - g / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == r) break;
    r = next;
  }
  if (!(best_g <= options.tolerance)) {
    throw CalibError(ErrorCode::NonConvergence,
                     "undistortion did not converge within the iteration cap");
  }
  return pd * (best_r / rd);
}

WorldPoint unproject_at_depth(const ImagePoint& p, const Intrinsics& intr, double depth,
                              const UndistortOptions& options) {
  if (!(depth > 0.0)) throw CalibError(ErrorCode::InvalidArgument, "depth must be positive");
  const Eigen::Vector2d pd((p.x() - intr.ppx) / intr.fx, (p.y() - intr.ppy) / intr.fy);
  const Eigen::Vector2d n = undistort_normalized(pd, intr, options);
  return WorldPoint(n.x() * depth, n.y() * depth, depth);
}

}  // namespace defcalib
