#pragma once

#include "lam3c/point_cloud.hpp"
#include "lam3c/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

namespace lam3c::test {

inline PointCloud uniform_cube(std::size_t n, std::uint64_t seed, double side = 1.0) {
  CounterRng rng(seed);
  PointCloud cloud;
  cloud.positions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    cloud.positions.emplace_back(side * rng.uniform(), side * rng.uniform(), side * rng.uniform());
  }
  return cloud;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, CounterRng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = scale * rng.normal();
    }
  }
  return m;
}

inline double angle_deg(const Vec3& a, const Vec3& b) {
  const double c = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

// Central differences, written separately from the library's gradcheck so the
// two cannot share a bug.
inline double fd_relative_error(const std::function<double(const Matrix&)>& f, const Matrix& x, const Matrix& analytic,
                                double h = 1e-5) {
  Matrix numeric(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      Matrix up = x;
      Matrix down = x;
      up(i, j) += h;
      down(i, j) -= h;
      numeric(i, j) = (f(up) - f(down)) / (2.0 * h);
    }
  }
  const double denom = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-12});
  return (analytic - numeric).cwiseAbs().maxCoeff() / denom;
}

}  // namespace lam3c::test
