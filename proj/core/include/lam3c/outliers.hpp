#pragma once

#include "lam3c/point_cloud.hpp"

namespace lam3c {

struct SorOptions {
  std::size_t k = 16;
  double std_mult = 2.0;
};

struct SorResult {
  PointCloud cloud;                 // survivors, in input order, valid points only
  std::vector<std::size_t> kept;    // indices into the input cloud
  std::vector<double> mean_distances;  // per valid input point, in valid_indices() order
  double threshold = 0.0;
  bool passthrough = false;         // too few points; input returned unchanged
};

// Statistical outlier removal: drop points whose mean distance to their k
// nearest neighbors exceeds mean + std_mult * stddev of those means.
SorResult sor_filter(const PointCloud& cloud, const SorOptions& options = {});

}  // namespace lam3c
