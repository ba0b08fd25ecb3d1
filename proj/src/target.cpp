#include "defcalib/target.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Geometry>

#include "defcalib/error.hpp"

namespace defcalib {

void TargetSpec::validate() const {
  if (rows < 2 || cols < 2) {
    throw CalibError(ErrorCode::InvalidArgument, "target needs at least 2x2 corners");
  }
  if (!(spacing > 0.0) || !std::isfinite(spacing)) {
    throw CalibError(ErrorCode::InvalidArgument, "target spacing must be positive");
  }
}

bool contains(const TargetSpec& spec, CornerId id) {
  return id.n >= 0 && id.n < spec.cols && id.m >= 0 && id.m < spec.rows;
}

int corner_index(const TargetSpec& spec, CornerId id) {
  if (!contains(spec, id)) {
    throw CalibError(ErrorCode::OutOfRange, "corner (" + std::to_string(id.n) + ", " +
                                                std::to_string(id.m) + ") outside the " +
                                                std::to_string(spec.cols) + "x" +
                                                std::to_string(spec.rows) + " grid");
  }
  return id.m * spec.cols + id.n;
}

CornerId corner_id(const TargetSpec& spec, int index) {
  if (index < 0 || index >= spec.corner_count()) {
    throw CalibError(ErrorCode::OutOfRange, "corner index " + std::to_string(index) + " out of range");
  }
  return CornerId{index % spec.cols, index / spec.cols};
}

WorldPoint corner_position(const TargetSpec& spec, CornerId id) {
  corner_index(spec, id);  // range check
  return WorldPoint((id.n - 0.5 * (spec.cols - 1)) * spec.spacing,
                    (id.m - 0.5 * (spec.rows - 1)) * spec.spacing, 0.0);
}

Eigen::Vector3d paraboloid_offset(const WorldPoint& x, const ParaboloidCoeffs& beta) {
  return {0.0, 0.0, beta.a * x.x() * x.x() + beta.b * x.y() * x.y() + beta.c * x.x() * x.y()};
}

double max_abs_offset(const TargetSpec& spec, const ParaboloidCoeffs& beta) {
  double result = 0.0;
  for (int i = 0; i < spec.corner_count(); ++i) {
    result = std::max(result, std::abs(paraboloid_offset(corner_position(spec, corner_id(spec, i)), beta).z()));
  }
  return result;
}

std::string_view to_string(DeformationModel model) {
  switch (model) {
    case DeformationModel::Standard: return "standard";
    case DeformationModel::Static3D: return "static";
    case DeformationModel::DynamicParaboloid: return "dynamic";
    case DeformationModel::FullInPlanePlusDynamic: return "full";
  }
  return "unknown";
}

DeformationModel parse_deformation_model(std::string_view name) {
  if (name == "standard") return DeformationModel::Standard;
  if (name == "static") return DeformationModel::Static3D;
  if (name == "dynamic") return DeformationModel::DynamicParaboloid;
  if (name == "full") return DeformationModel::FullInPlanePlusDynamic;
  throw CalibError(ErrorCode::InvalidArgument, "unknown method '" + std::string(name) +
                                                   "' (expected standard, static, dynamic or full)");
}

int static_dofs_per_corner(DeformationModel model) {
  switch (model) {
    case DeformationModel::Static3D: return 3;
    case DeformationModel::FullInPlanePlusDynamic: return 2;
    default: return 0;
  }
}

bool has_dynamic_block(DeformationModel model) {
  return model == DeformationModel::DynamicParaboloid ||
         model == DeformationModel::FullInPlanePlusDynamic;
}

StaticCorrection StaticCorrection::zeros(const TargetSpec& spec, bool in_plane) {
  return StaticCorrection{std::vector<Eigen::Vector3d>(spec.corner_count(), Eigen::Vector3d::Zero()),
                          in_plane};
}

GaugeAnchors GaugeAnchors::defaults(const TargetSpec& spec) {
  return GaugeAnchors{0, spec.cols - 1, (spec.rows - 1) * spec.cols};
}

namespace {

void check_anchor(const TargetSpec& spec, int index) {
  if (index < 0 || index >= spec.corner_count()) {
    throw CalibError(ErrorCode::DegenerateConfiguration,
                     "gauge anchor " + std::to_string(index) + " is not a corner of the board");
  }
}

}  // namespace

std::vector<int> gauge_mask(DeformationModel model, const TargetSpec& spec,
                            const GaugeAnchors& anchors) {
  if (spec.rows < 2 || spec.cols < 2) {
    throw CalibError(ErrorCode::DegenerateConfiguration,
                     "board too small to supply non-collinear gauge anchors");
  }
  switch (model) {
    case DeformationModel::Standard:
    case DeformationModel::DynamicParaboloid:
      return {};
    case DeformationModel::Static3D: {
      check_anchor(spec, anchors.first);
      check_anchor(spec, anchors.second);
      check_anchor(spec, anchors.third);
      const WorldPoint a = corner_position(spec, corner_id(spec, anchors.first));
      const WorldPoint b = corner_position(spec, corner_id(spec, anchors.second));
      const WorldPoint c = corner_position(spec, corner_id(spec, anchors.third));
      const double area2 = (b - a).cross(c - a).norm();
      if (!(area2 > 1e-12 * spec.spacing * spec.spacing)) {
        throw CalibError(ErrorCode::DegenerateConfiguration, "static gauge anchors are collinear");
      }
      std::vector<int> mask = {3 * anchors.first, 3 * anchors.first + 1, 3 * anchors.first + 2,
                               3 * anchors.second, 3 * anchors.second + 1, 3 * anchors.second + 2,
                               3 * anchors.third + 2};
      std::sort(mask.begin(), mask.end());
      return mask;
    }
    case DeformationModel::FullInPlanePlusDynamic: {
      check_anchor(spec, anchors.first);
      check_anchor(spec, anchors.second);
      if (anchors.first == anchors.second) {
        throw CalibError(ErrorCode::DegenerateConfiguration, "in-plane gauge anchors coincide");
      }
      std::vector<int> mask = {2 * anchors.first, 2 * anchors.first + 1,
                               2 * anchors.second, 2 * anchors.second + 1};
      std::sort(mask.begin(), mask.end());
      return mask;
    }
  }
  return {};
}

std::vector<int> gauge_mask(DeformationModel model, const TargetSpec& spec) {
  return gauge_mask(model, spec, GaugeAnchors::defaults(spec));
}

WorldPoint deformed_point(const TargetSpec& spec, CornerId id, DeformationModel model,
                          const StaticCorrection* static_correction,
                          const ParaboloidCoeffs* beta) {
  const bool wants_static = static_dofs_per_corner(model) > 0;
  const bool wants_beta = has_dynamic_block(model);
  if (wants_static != (static_correction != nullptr) || wants_beta != (beta != nullptr)) {
    throw CalibError(ErrorCode::MissingParameters,
                     "parameter blocks do not match the '" + std::string(to_string(model)) + "' model");
  }
  const WorldPoint grid = corner_position(spec, id);
  WorldPoint x = grid;
  if (static_correction != nullptr) {
    const int index = corner_index(spec, id);
    if (static_cast<int>(static_correction->offsets.size()) != spec.corner_count()) {
      throw CalibError(ErrorCode::MissingParameters, "static correction size does not match the board");
    }
    const Eigen::Vector3d& offset = static_correction->offsets[index];
    if (model == DeformationModel::FullInPlanePlusDynamic) {
      x.x() += offset.x();
      x.y() += offset.y();
    } else {
      x += offset;
    }
  }
  if (beta != nullptr) x += paraboloid_offset(grid, *beta);
  return x;
}

}  // namespace defcalib
