#pragma once

#include "lam3c/plane.hpp"
#include "lam3c/point_cloud.hpp"

#include <optional>

namespace lam3c {

struct ZUpOptions {
  // Inlier band used when refining the plane in the rotated frame.
  double refine_threshold = 0.02;
  int max_refine_iterations = 10;
};

struct ZUpResult {
  PointCloud cloud;
  RigidSimilarity transform;  // scale == 1
  Plane refined_plane;        // in the output frame; normal ~ +Z, offset ~ 0
  bool flipped = false;       // the plane normal was reversed by the majority rule
  std::size_t refine_iterations = 0;
};

// Smallest rotation taking unit vector `from` onto unit vector `to`; a half
// turn about the first axis orthogonal to `from` when they are opposite.
Mat3 minimal_rotation(const Vec3& from, const Vec3& to);

// Rotate the plane normal onto +Z (oriented so most points end up above the
// plane), put the plane at z = 0, then re-fit the in-band points and apply the
// residual correction until the inlier set stops changing.
ZUpResult align_z_up(const PointCloud& cloud, const Plane& plane, const ZUpOptions& options = {});

// Norm of (max - min) over valid points.
double aabb_diagonal(const PointCloud& cloud);

struct ScaleResult {
  PointCloud cloud;
  RigidSimilarity transform;
  double alpha = 1.0;
};

// Scale positions by s_target / aabb_diagonal about `pivot` (the centroid when unset).
ScaleResult scale_align(const PointCloud& cloud, double s_target, std::optional<Vec3> pivot = std::nullopt);

}  // namespace lam3c
