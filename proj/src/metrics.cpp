#include "defcalib/metrics.hpp"

#include <cmath>

#include "defcalib/error.hpp"

namespace defcalib {

double rmse(const Eigen::VectorXd& residuals) {
  if (residuals.size() == 0) throw CalibError(ErrorCode::InsufficientData, "RMSE of an empty residual set");
  return std::sqrt(residuals.squaredNorm() / static_cast<double>(residuals.size()));
}

double training_rmse(const CalibrationResult& result) { return rmse(result.residuals); }

double test_error(const Intrinsics& intrinsics, const Dataset& reference, const TargetSpec& spec,
                  const StaticCorrection* reference_correction, const SolverConfig& config) {
  return reduced_calibrate(reference, spec, intrinsics, reference_correction, config).rmse;
}

void MappingErrorConfig::validate() const {
  if (image_width < 2 || image_height < 2) {
    throw CalibError(ErrorCode::InvalidArgument, "mapping error: image size must be at least 2x2");
  }
  if (grid_resolution < 2) throw CalibError(ErrorCode::InvalidArgument, "mapping error: grid resolution must be >= 2");
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw CalibError(ErrorCode::InvalidArgument, "mapping error: depth must be positive");
  }
}

MappingError mapping_error(const Intrinsics& a, const Intrinsics& b, const MappingErrorConfig& config) {
  config.validate();
  if (!a.is_valid() || !b.is_valid()) throw CalibError(ErrorCode::InvalidArgument, "mapping error: invalid intrinsics");
  const int n = config.grid_resolution;
  // cell-centered grid over [0, W] x [0, H]
  const double su = static_cast<double>(config.image_width) / n;
  const double sv = static_cast<double>(config.image_height) / n;
  MappingError out;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const ImagePoint p((j + 0.5) * su, (i + 0.5) * sv);
      try {
        const WorldPoint x = unproject_at_depth(p, a, config.depth);
        sum += (project(x, b) - project(x, a)).squaredNorm();
        ++out.evaluated;
      } catch (const CalibError&) {
        ++out.excluded;
      }
    }
  }
  if (out.evaluated == 0) {
    throw CalibError(ErrorCode::NonConvergence, "mapping error: no grid point could be unprojected");
  }
  out.rmse = std::sqrt(sum / out.evaluated);
  return out;
}

double symmetric_mapping_error(const Intrinsics& a, const Intrinsics& b, const MappingErrorConfig& config) {
  return 0.5 * (mapping_error(a, b, config).rmse + mapping_error(b, a, config).rmse);
}

}  // namespace defcalib
