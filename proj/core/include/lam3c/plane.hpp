#pragma once

#include "lam3c/point_cloud.hpp"

#include <optional>

namespace lam3c {

// Points p with normal . p == offset.
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  std::size_t inlier_count = 0;
  double inlier_ratio = 0.0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

struct RansacOptions {
  int iterations = 512;
  double inlier_threshold = 0.02;
  double min_inlier_ratio = 0.15;
  std::uint64_t seed = 0;
};

// 0.02 of the scene diagonal, capped at 5 cm.
double default_inlier_threshold(double scene_diagonal);

// Least-squares plane through the points: centroid plus the direction of least
// variance. The normal is sign-canonicalized (see canonical_normal).
Plane fit_plane(std::span<const Vec3> points);

// Flip so that z > 0, falling back to x > 0, then y > 0, on near-zero components.
Vec3 canonical_normal(const Vec3& n);

// RANSAC over 3-point samples, then a least-squares refit on the winning
// inliers. Returns nullopt when the best inlier ratio is below the minimum or
// every sample is collinear. Deterministic for a fixed seed.
std::optional<Plane> detect_dominant_plane(const PointCloud& cloud, const RansacOptions& options = {});

std::vector<std::size_t> plane_inliers(const PointCloud& cloud, const Plane& plane, double threshold);

}  // namespace lam3c
