#pragma once

#include <vector>

#include "lidarsim/grid_index.hpp"

namespace lidarsim {

/// Per-point unit normals from the smallest eigenvector of the neighborhood
/// covariance, oriented toward `view_origin`. Points with fewer than three
/// neighbors fall back to the direction toward the origin.
std::vector<Vec3> estimate_point_normals(const std::vector<Vec3>& points,
                                         const SpatialGridIndex& index, double radius,
                                         const Vec3& view_origin = {});

}  // namespace lidarsim
