#include "lam3c/normals.hpp"

#include "lam3c/kdtree.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace lam3c {

Vec3 orient_normal(const Vec3& n) {
  constexpr double eps = 1e-6;
  if (std::abs(n.z()) >= eps) {
    return n.z() < 0.0 ? Vec3(-n) : n;
  }
  if (std::abs(n.x()) >= eps) {
    return n.x() < 0.0 ? Vec3(-n) : n;
  }
  return n.y() < 0.0 ? Vec3(-n) : n;
}

NormalsResult estimate_normals(const PointCloud& cloud, std::size_t k) {
  const auto nodes = cloud.valid_indices();
  if (nodes.size() <= k) {
    throw EmptyCloudError("normal estimation needs more than k points");
  }
  const KdTree tree(cloud.positions, nodes);
  NormalsResult result;
  result.cloud = cloud;
  Positions normals(cloud.size(), Vec3::UnitZ());
  result.degenerate.assign(cloud.size(), 0);

  for (const auto i : nodes) {
    // The query point is its own nearest neighbor: k + 1 points in total.
    const auto nbrs = tree.knn(cloud.positions[i], k + 1);
    Vec3 c = Vec3::Zero();
    for (const auto& nb : nbrs) {
      c += cloud.positions[nb.index];
    }
    c /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& nb : nbrs) {
      const Vec3 d = cloud.positions[nb.index] - c;
      cov.noalias() += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
    const Vec3 ev = solver.eigenvalues();
    const double scale = std::max(ev(2), 0.0);
    // Rank < 2: the middle eigenvalue vanishes relative to the largest.
    if (!(scale > 0.0) || ev(1) <= 1e-12 * scale) {
      result.degenerate[i] = 1;
      normals[i] = Vec3::UnitZ();
      continue;
    }
    normals[i] = orient_normal(solver.eigenvectors().col(0).normalized());
  }
  result.cloud.normals = std::move(normals);
  return result;
}

}  // namespace lam3c
