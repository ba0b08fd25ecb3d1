#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "defcalib/geometry.hpp"

namespace defcalib {

// Checkerboard corner grid. The board frame has its origin at the geometric
// center of the grid, x along the columns, y along the rows and z = 0 on the
// nominal board plane.
struct TargetSpec {
  int rows = 0;          // corners along y
  int cols = 0;          // corners along x
  double spacing = 0.0;  // grid width d, meters

  int corner_count() const { return rows * cols; }
  // Throws CalibError(InvalidArgument) unless rows, cols >= 2 and spacing > 0.
  void validate() const;

  friend bool operator==(const TargetSpec&, const TargetSpec&) = default;
};

// n indexes columns (x), m indexes rows (y).
struct CornerId {
  int n = 0;
  int m = 0;

  friend bool operator==(const CornerId&, const CornerId&) = default;
};

bool contains(const TargetSpec& spec, CornerId id);
// Row-major linear index m * cols + n. Throws CalibError(OutOfRange).
int corner_index(const TargetSpec& spec, CornerId id);
CornerId corner_id(const TargetSpec& spec, int index);

// Nominal board coordinates ((n - (cols-1)/2) d, (m - (rows-1)/2) d, 0).
WorldPoint corner_position(const TargetSpec& spec, CornerId id);

// Per-frame out-of-plane paraboloid z = a x^2 + b y^2 + c x y (units 1/m).
struct ParaboloidCoeffs {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  Eigen::Vector3d as_vector() const { return {a, b, c}; }
  static ParaboloidCoeffs from_vector(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

  friend bool operator==(const ParaboloidCoeffs&, const ParaboloidCoeffs&) = default;
};

Eigen::Vector3d paraboloid_offset(const WorldPoint& x, const ParaboloidCoeffs& beta);
// max_i |z(x_i)| over every corner of the board.
double max_abs_offset(const TargetSpec& spec, const ParaboloidCoeffs& beta);

enum class DeformationModel {
  Standard,                // rigid planar grid
  Static3D,                // one 3D offset per corner shared by all frames
  DynamicParaboloid,       // one paraboloid per frame
  FullInPlanePlusDynamic,  // static in-plane offsets + per-frame paraboloid
};

// Accepted names: standard, static, dynamic, full.
std::string_view to_string(DeformationModel model);
DeformationModel parse_deformation_model(std::string_view name);

// Scalars per corner in the static block: 3, 2 or 0.
int static_dofs_per_corner(DeformationModel model);
bool has_dynamic_block(DeformationModel model);

// Static per-corner offsets, indexed by linear corner index. For the in-plane
// variant every z entry is zero.
struct StaticCorrection {
  std::vector<Eigen::Vector3d> offsets;
  bool in_plane = false;

  static StaticCorrection zeros(const TargetSpec& spec, bool in_plane);
};

// Corners (linear indices) whose static corrections are pinned to remove the
// gauge freedom. Static3D pins all of `first` and `second` and the z of
// `third`; FullInPlanePlusDynamic pins x,y of `first` and `second`.
struct GaugeAnchors {
  int first = 0;
  int second = 0;
  int third = 0;

  // First corner, last corner of the first row, first corner of the last row.
  static GaugeAnchors defaults(const TargetSpec& spec);
};

// Indices into the static parameter block (corner-major) that are held at
// zero. Empty for Standard and DynamicParaboloid. Throws
// CalibError(DegenerateConfiguration) for collinear or repeated anchors.
std::vector<int> gauge_mask(DeformationModel model, const TargetSpec& spec,
                            const GaugeAnchors& anchors);
std::vector<int> gauge_mask(DeformationModel model, const TargetSpec& spec);

// Board point of a corner under the given deformation model. The static and
// paraboloid blocks must be supplied exactly when the model uses them
// (CalibError(MissingParameters) otherwise). The paraboloid is evaluated at
// the nominal grid coordinates.
WorldPoint deformed_point(const TargetSpec& spec, CornerId id, DeformationModel model,
                          const StaticCorrection* static_correction,
                          const ParaboloidCoeffs* beta);

}  // namespace defcalib
