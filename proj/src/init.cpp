#include "defcalib/init.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "defcalib/error.hpp"

namespace defcalib {

namespace {

// Similarity moving the centroid to the origin with RMS distance sqrt(2).
// Returns false if all points coincide.
bool hartley_normalization(const std::vector<Eigen::Vector2d>& pts, Eigen::Matrix3d* t) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double rms = 0.0;
  for (const auto& p : pts) rms += (p - centroid).squaredNorm();
  rms = std::sqrt(rms / static_cast<double>(pts.size()));
  if (!(rms > 0.0)) return false;
  const double s = std::sqrt(2.0) / rms;
  *t << s, 0.0, -s * centroid.x(),
        0.0, s, -s * centroid.y(),
        0.0, 0.0, 1.0;
  return true;
}

bool collinear(const std::vector<Eigen::Vector2d>& pts, double tolerance) {
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  Eigen::Matrix2d scatter = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) scatter += (p - centroid) * (p - centroid).transpose();
  const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(scatter).eigenvalues();
  return !(ev(1) > 0.0) || ev(0) <= tolerance * ev(1);
}

Eigen::Vector2d apply(const Eigen::Matrix3d& h, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = h * p.homogeneous();
  return q.hnormalized();
}

// Row of the zero-skew conic constraint h_i^T B h_j in terms of
// b = (B11, B22, B13, B23, B33).
Eigen::Matrix<double, 1, 5> conic_row(const Eigen::Vector3d& hi, const Eigen::Vector3d& hj) {
  Eigen::Matrix<double, 1, 5> v;
  v << hi(0) * hj(0), hi(1) * hj(1), hi(0) * hj(2) + hi(2) * hj(0),
       hi(1) * hj(2) + hi(2) * hj(1), hi(2) * hj(2);
  return v;
}

}  // namespace

Eigen::Vector2d Homography::map(const Eigen::Vector2d& board) const {
  return apply(matrix, board);
}

Homography estimate_homography(std::span<const Correspondence> corr,
                               const HomographyOptions& options) {
  const int n = static_cast<int>(corr.size());
  if (n < 4) {
    throw CalibError(ErrorCode::InsufficientData, "homography needs at least 4 correspondences");
  }
  std::vector<Eigen::Vector2d> board(n), image(n);
  for (int i = 0; i < n; ++i) {
    board[i] = corr[i].board;
    image[i] = corr[i].image;
  }
  Eigen::Matrix3d t_board, t_image;
  if (!hartley_normalization(board, &t_board) || !hartley_normalization(image, &t_image)) {
    throw CalibError(ErrorCode::DegenerateConfiguration, "coincident homography correspondences");
  }
  if (collinear(board, options.collinearity_tolerance) ||
      collinear(image, options.collinearity_tolerance)) {
    throw CalibError(ErrorCode::DegenerateConfiguration, "collinear homography correspondences");
  }

  Eigen::MatrixXd a(2 * n, 9);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d b = apply(t_board, board[i]);
    const Eigen::Vector2d u = apply(t_image, image[i]);
    a.row(2 * i) << -b.x(), -b.y(), -1.0, 0.0, 0.0, 0.0, u.x() * b.x(), u.x() * b.y(), u.x();
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, -b.x(), -b.y(), -1.0, u.y() * b.x(), u.y() * b.y(), u.y();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  if (!(sv(7) > options.rank_tolerance * sv(0))) {
    throw CalibError(ErrorCode::DegenerateConfiguration, "rank-deficient DLT design matrix");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

  Homography result;
  result.matrix = t_image.inverse() * hn * t_board;
  result.matrix /= result.matrix.norm();
  if (result.matrix(2, 2) < 0.0) result.matrix = -result.matrix;

  double sq = 0.0;
  for (int i = 0; i < n; ++i) sq += (result.map(board[i]) - image[i]).squaredNorm();
  result.transfer_rms = std::sqrt(sq / n);
  return result;
}

Intrinsics intrinsics_from_homographies(std::span<const Homography> hs,
                                        const IntrinsicsInitOptions& options) {
  const int n = static_cast<int>(hs.size());
  if (n < 3) {
    throw CalibError(ErrorCode::InsufficientData,
                     "closed-form intrinsics need at least 3 homographies, got " + std::to_string(n));
  }

  // Condition the problem by moving the mean image of the board origin to
  // zero and scaling pixel coordinates to order one.
  Eigen::Vector2d c0 = Eigen::Vector2d::Zero();
  for (const auto& h : hs) c0 += h.map(Eigen::Vector2d::Zero());
  c0 /= static_cast<double>(n);
  const double s = std::max(c0.norm(), 1.0);
  Eigen::Matrix3d norm;
  norm << 1.0 / s, 0.0, -c0.x() / s,
          0.0, 1.0 / s, -c0.y() / s,
          0.0, 0.0, 1.0;

  Eigen::MatrixXd v(2 * n, 5);
  for (int i = 0; i < n; ++i) {
    Eigen::Matrix3d h = norm * hs[i].matrix;
    h /= h.norm();
    const Eigen::Vector3d h1 = h.col(0);
    const Eigen::Vector3d h2 = h.col(1);
    v.row(2 * i) = conic_row(h1, h2);
    v.row(2 * i + 1) = conic_row(h1, h1) - conic_row(h2, h2);
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double conditioning = sv(3) / sv(0);
  if (!(conditioning > options.min_conditioning)) {
    std::ostringstream msg;
    msg << "homographies do not constrain the intrinsics (conditioning " << conditioning
        << " <= " << options.min_conditioning << "); use more varied board orientations";
    throw CalibError(ErrorCode::IllConditioned, msg.str());
  }
  Eigen::Matrix<double, 5, 1> b = svd.matrixV().col(4);
  if (b(0) < 0.0) b = -b;
  const double b11 = b(0), b22 = b(1), b13 = b(2), b23 = b(3), b33 = b(4);
  const double lambda = b33 - b13 * b13 / b11 - b23 * b23 / b22;
  if (!(b11 > 0.0) || !(b22 > 0.0) || !(lambda > 0.0)) {
    throw CalibError(ErrorCode::IllConditioned,
                     "absolute conic estimate is not positive definite; homographies are too noisy or degenerate");
  }
  Intrinsics intr;
  intr.fx = s * std::sqrt(lambda / b11);
  intr.fy = s * std::sqrt(lambda / b22);
  intr.ppx = s * (-b13 / b11) + c0.x();
  intr.ppy = s * (-b23 / b22) + c0.y();
  return intr;
}

Pose pose_from_homography(const Homography& homography, const Intrinsics& intr) {
  Eigen::Matrix3d k;
  k << intr.fx, 0.0, intr.ppx,
       0.0, intr.fy, intr.ppy,
       0.0, 0.0, 1.0;
  const Eigen::Matrix3d m = k.inverse() * homography.matrix;
  const double scale = 2.0 / (m.col(0).norm() + m.col(1).norm());
  const Eigen::Vector3d t = scale * m.col(2);
  if (!(t.z() > 0.0)) {
    throw CalibError(ErrorCode::Cheirality, "homography places the board behind the camera");
  }
  Eigen::Matrix3d r;
  r.col(0) = scale * m.col(0);
  r.col(1) = scale * m.col(1);
  r.col(2) = r.col(0).cross(r.col(1));
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
  fix(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d rotation = svd.matrixU() * fix * svd.matrixV().transpose();
  return Pose::from_matrix(rotation, t);
}

}  // namespace defcalib
