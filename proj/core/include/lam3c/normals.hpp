#pragma once

#include "lam3c/point_cloud.hpp"

namespace lam3c {

struct NormalsResult {
  PointCloud cloud;   // input with normals filled
  Mask degenerate;    // 1 where the neighborhood covariance had rank < 2
};

// Per-point PCA normal over the point and its k nearest neighbors: the
// eigenvector of the smallest covariance eigenvalue, oriented into the +Z
// hemisphere (+X, then +Y, when the z component is below 1e-6).
// Rank-deficient neighborhoods get +Z and a flag.
NormalsResult estimate_normals(const PointCloud& cloud, std::size_t k = 16);

Vec3 orient_normal(const Vec3& n);

}  // namespace lam3c
