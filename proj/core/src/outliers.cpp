#include "lam3c/outliers.hpp"

#include "lam3c/kdtree.hpp"

#include <cmath>

namespace lam3c {

SorResult sor_filter(const PointCloud& cloud, const SorOptions& options) {
  if (!(options.std_mult > 0.0)) {
    throw InvalidArgument("SOR std_mult must be positive");
  }
  SorResult result;
  const auto nodes = cloud.valid_indices();
  if (nodes.size() <= options.k || options.k == 0) {
    result.cloud = cloud;
    result.kept.resize(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      result.kept[i] = i;
    }
    result.passthrough = true;
    return result;
  }

  const KdTree tree(cloud.positions, nodes);
  result.mean_distances.reserve(nodes.size());
  for (const auto i : nodes) {
    double sum = 0.0;
    for (const auto& nb : tree.knn(cloud.positions[i], options.k, i)) {
      sum += std::sqrt(nb.squared_distance);
    }
    result.mean_distances.push_back(sum / static_cast<double>(options.k));
  }

  const auto n = static_cast<double>(nodes.size());
  double mean = 0.0;
  for (const double d : result.mean_distances) {
    mean += d;
  }
  mean /= n;
  double var = 0.0;
  for (const double d : result.mean_distances) {
    var += (d - mean) * (d - mean);
  }
  const double stddev = std::sqrt(var / n);
  result.threshold = mean + options.std_mult * stddev;
  // A spread at rounding level means all means are equal: nothing is an outlier.
  const bool flat = stddev <= 1e-12 * std::max(mean, 1e-300);

  for (std::size_t r = 0; r < nodes.size(); ++r) {
    if (flat || result.mean_distances[r] <= result.threshold) {
      result.kept.push_back(nodes[r]);
    }
  }
  result.cloud = cloud.subset(result.kept);
  result.cloud.valid.clear();
  return result;
}

}  // namespace lam3c
