#pragma once

#include <span>

#include <Eigen/Core>

#include "defcalib/geometry.hpp"

namespace defcalib {

// Board-plane point (centered board frame, meters) and its image (pixels).
struct Correspondence {
  Eigen::Vector2d board;
  Eigen::Vector2d image;
};

// Plane-to-image homography. Estimated homographies are scaled to unit
// Frobenius norm with h33 >= 0.
struct Homography {
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();
  double transfer_rms = 0.0;  // pixels, over the estimation inputs

  Eigen::Vector2d map(const Eigen::Vector2d& board) const;
};

struct HomographyOptions {
  // Relative threshold on the point-spread eigenvalues below which the input
  // points count as collinear.
  double collinearity_tolerance = 1e-9;
  // Relative threshold on the second-smallest singular value of the DLT
  // design matrix.
  double rank_tolerance = 1e-12;
};

// Normalized DLT. Throws CalibError(InsufficientData) for fewer than 4
// points and CalibError(DegenerateConfiguration) for collinear/coincident
// points or a rank-deficient design matrix.
Homography estimate_homography(std::span<const Correspondence> correspondences,
                               const HomographyOptions& options = {});

struct IntrinsicsInitOptions {
  // Minimum ratio of the second-smallest to the largest singular value of the
  // stacked orthonormality constraints.
  double min_conditioning = 1e-9;
};

// Closed-form zero-skew pinhole intrinsics from >= 3 plane homographies via
// the image of the absolute conic. Distortion is returned as zero.
// Throws CalibError(InsufficientData) or CalibError(IllConditioned).
Intrinsics intrinsics_from_homographies(std::span<const Homography> homographies,
                                        const IntrinsicsInitOptions& options = {});

// Decomposes H ~ K [r1 r2 t] for a board in the centered board frame. The
// rotation is projected onto SO(3). Throws CalibError(Cheirality) if the
// board origin does not lie in front of the camera.
Pose pose_from_homography(const Homography& homography, const Intrinsics& intr);

}  // namespace defcalib
