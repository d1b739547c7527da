#include "lam3c/plane.hpp"

#include "lam3c/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace lam3c {

double default_inlier_threshold(double scene_diagonal) { return std::min(0.02 * scene_diagonal, 0.05); }

Vec3 canonical_normal(const Vec3& n) {
  constexpr double eps = 1e-12;
  for (int axis : {2, 0, 1}) {
    if (std::abs(n[axis]) > eps) {
      return n[axis] < 0.0 ? Vec3(-n) : n;
    }
  }
  return n;
}

Plane fit_plane(std::span<const Vec3> points) {
  if (points.size() < 3) {
    throw DegenerateGeometryError("plane fit needs at least 3 points");
  }
  Vec3 c = Vec3::Zero();
  for (const auto& p : points) {
    c += p;
  }
  c /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - c;
    cov.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  // Eigenvalues ascend: column 0 is the least-variance direction.
  const Vec3 n = canonical_normal(solver.eigenvectors().col(0).normalized());
  Plane plane;
  plane.normal = n;
  plane.offset = n.dot(c);
  return plane;
}

std::vector<std::size_t> plane_inliers(const PointCloud& cloud, const Plane& plane, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.is_valid(i) && std::abs(plane.signed_distance(cloud.positions[i])) <= threshold) {
      out.push_back(i);
    }
  }
  return out;
}

std::optional<Plane> detect_dominant_plane(const PointCloud& cloud, const RansacOptions& options) {
  const auto nodes = cloud.valid_indices();
  if (nodes.size() < 3) {
    return std::nullopt;
  }
  const auto& pts = cloud.positions;
  CounterRng rng = CounterRng(options.seed).fork("ransac");

  std::size_t best_count = 0;
  Plane best;
  bool any = false;
  for (int it = 0; it < options.iterations; ++it) {
    const auto a = nodes[rng.below(nodes.size())];
    const auto b = nodes[rng.below(nodes.size())];
    const auto c = nodes[rng.below(nodes.size())];
    if (a == b || b == c || a == c) {
      continue;
    }
    const Vec3 u = pts[b] - pts[a];
    const Vec3 v = pts[c] - pts[a];
    const Vec3 cr = u.cross(v);
    const double norm = cr.norm();
    if (!(norm > 1e-12 * std::max(1.0, u.squaredNorm() + v.squaredNorm()))) {
      continue;  // collinear sample
    }
    Plane cand;
    cand.normal = canonical_normal(cr / norm);
    cand.offset = cand.normal.dot(pts[a]);
    std::size_t count = 0;
    for (const auto i : nodes) {
      if (std::abs(cand.signed_distance(pts[i])) <= options.inlier_threshold) {
        ++count;
      }
    }
    if (!any || count > best_count) {
      best = cand;
      best_count = count;
      any = true;
    }
  }
  if (!any) {
    return std::nullopt;
  }

  std::vector<Vec3> inlier_pts;
  for (const auto i : plane_inliers(cloud, best, options.inlier_threshold)) {
    inlier_pts.push_back(pts[i]);
  }
  Plane refit = fit_plane(inlier_pts);
  refit.inlier_count = plane_inliers(cloud, refit, options.inlier_threshold).size();
  refit.inlier_ratio = static_cast<double>(refit.inlier_count) / static_cast<double>(nodes.size());
  if (refit.inlier_ratio < options.min_inlier_ratio) {
    return std::nullopt;
  }
  return refit;
}

}  // namespace lam3c
