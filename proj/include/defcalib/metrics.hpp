#pragma once

#include "defcalib/dataset.hpp"
#include "defcalib/geometry.hpp"
#include "defcalib/solver.hpp"
#include "defcalib/target.hpp"

namespace defcalib {

// sqrt(mean of squared residual scalars), without robust weighting. Throws
// CalibError(InsufficientData) on an empty residual vector.
double rmse(const Eigen::VectorXd& residuals);
double training_rmse(const CalibrationResult& result);

// RMSE of a poses-only calibration on `reference` with `intrinsics` and the
// optional static correction held fixed.
double test_error(const Intrinsics& intrinsics, const Dataset& reference, const TargetSpec& spec,
                  const StaticCorrection* reference_correction, const SolverConfig& config = {});

// Cell-centered grid of resolution x resolution points covering the image,
// unprojected to the plane z = depth.
struct MappingErrorConfig {
  int image_width = 1280;
  int image_height = 960;
  int grid_resolution = 50;
  double depth = 1.0;  // m

  void validate() const;
};

struct MappingError {
  double rmse = 0.0;  // px
  int evaluated = 0;
  int excluded = 0;  // grid points outside the invertible region of `a`
};

// Unproject with `a`, reproject with `b`, measured against the reprojection
// with `a`. Throws CalibError(NonConvergence)
// when no grid point can be unprojected.
MappingError mapping_error(const Intrinsics& a, const Intrinsics& b, const MappingErrorConfig& config = {});

// Mean of mapping_error(a, b) and mapping_error(b, a).
double symmetric_mapping_error(const Intrinsics& a, const Intrinsics& b,
                               const MappingErrorConfig& config = {});

}  // namespace defcalib
