#pragma once

#include <array>
#include <span>
#include <vector>

#include "langsurf/scene.hpp"

namespace langsurf {

/// Closed triangulated convex polytope. Faces wind counter-clockwise seen
/// from outside; a point x is inside face f when normals[f].x <= offsets[f].
struct ConvexHull {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3> normals;  ///< unit, outward
  std::vector<double> offsets;

  /// Signed distance of `p` to the plane of face f (positive outside).
  double signed_distance(std::size_t f, const Vec3& p) const { return normals[f].dot(p) - offsets[f]; }
};

/// Dimension of the affine span (0..3) with tolerance `tol`.
int affine_rank(std::span<const Vec3> points, double tol = 1e-9);

/// Quickhull with an Akl-Toussaint prefilter. Fewer than 4 points or an
/// affine rank below 3 raise DegenerateHullError carrying the rank.
ConvexHull build_hull(std::span<const Vec3> points);
ConvexHull build_hull_xyz(std::span<const double> xyz);

/// Inside or on the boundary: every face has signed distance <= tol.
bool contains(const ConvexHull& hull, const Vec3& point, double tol = 1e-9);

}  // namespace langsurf
