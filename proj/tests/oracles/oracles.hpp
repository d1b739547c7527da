#pragma once

// Plain brute-force versions of library routines. They share no code with the
// library beyond the basic types.

#include "lam3c/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <tuple>
#include <utility>
#include <vector>

namespace lam3c::oracle {

struct Hit {
  std::size_t index;
  double d2;
};

inline double dist2(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

// Full scan, sorted by (squared distance, index).
inline std::vector<Hit> knn(const std::vector<Vec3>& points, const Vec3& q, std::size_t k,
                            std::size_t exclude = static_cast<std::size_t>(-1)) {
  std::vector<Hit> all;
  all.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (i != exclude) {
      all.push_back({i, dist2(points[i], q)});
    }
  }
  const std::size_t m = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m), all.end(),
                    [](const Hit& a, const Hit& b) { return a.d2 < b.d2 || (a.d2 == b.d2 && a.index < b.index); });
  all.resize(m);
  return all;
}

// Indices kept by statistical outlier removal (population standard deviation).
inline std::vector<std::size_t> sor_keep(const std::vector<Vec3>& points, std::size_t k, double std_mult) {
  const std::size_t n = points.size();
  std::vector<double> mean_d(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (const Hit& h : knn(points, points[i], k, i)) {
      s += std::sqrt(h.d2);
    }
    mean_d[i] = s / static_cast<double>(k);
  }
  double mu = 0.0;
  for (double d : mean_d) mu += d;
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (double d : mean_d) var += (d - mu) * (d - mu);
  const double limit = mu + std_mult * std::sqrt(var / static_cast<double>(n));
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (mean_d[i] <= limit) keep.push_back(i);
  }
  return keep;
}

// Alternating column (to B/K) and row (to 1) scaling on exp(L / tau - rowmax).
inline std::vector<std::vector<double>> sinkhorn(const std::vector<std::vector<double>>& logits, double tau,
                                                 int iterations) {
  const std::size_t b = logits.size();
  const std::size_t k = logits[0].size();
  std::vector<std::vector<double>> q(b, std::vector<double>(k));
  for (std::size_t i = 0; i < b; ++i) {
    const double top = *std::max_element(logits[i].begin(), logits[i].end()) / tau;
    for (std::size_t j = 0; j < k; ++j) q[i][j] = std::exp(logits[i][j] / tau - top);
  }
  const double target = static_cast<double>(b) / static_cast<double>(k);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < b; ++i) s += q[i][j];
      for (std::size_t i = 0; i < b; ++i) q[i][j] *= target / s;
    }
    for (std::size_t i = 0; i < b; ++i) {
      double s = 0.0;
      for (double v : q[i]) s += v;
      for (double& v : q[i]) v /= s;
    }
  }
  return q;
}

// Limit of 2x2 balancing: [[a, 1-a], [1-a, a]] with the same cross ratio as exp(L / tau).
inline double sinkhorn_2x2_limit(double l00, double l01, double l10, double l11, double tau) {
  const double root = std::exp(0.5 * (l00 + l11 - l01 - l10) / tau);
  return root / (1.0 + root);
}

// Largest share of points in any single voxel of side `grid`.
inline double max_voxel_fraction(const std::vector<Vec3>& points, double grid) {
  std::map<std::tuple<long, long, long>, std::size_t> count;
  std::size_t top = 0;
  for (const Vec3& p : points) {
    const auto key = std::make_tuple(static_cast<long>(std::floor(p.x() / grid)),
                                     static_cast<long>(std::floor(p.y() / grid)),
                                     static_cast<long>(std::floor(p.z() / grid)));
    top = std::max(top, ++count[key]);
  }
  return static_cast<double>(top) / static_cast<double>(points.size());
}

// Least-squares plane normal through `points` via the covariance eigenvectors.
inline Vec3 plane_normal(const std::vector<Vec3>& points) {
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : points) c += p;
  c /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : points) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  return eig.eigenvectors().col(0);
}

inline double axis_angle_deg(const Vec3& a, const Vec3& b) {
  const double c = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
  return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace lam3c::oracle
