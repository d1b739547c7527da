#pragma once

#include "lam3c/point_cloud.hpp"

#include <cmath>
#include <span>
#include <variant>
#include <vector>

namespace lam3c {

struct KnnEdge {
  std::uint32_t source;
  std::uint32_t target;
  double distance;  // meters, > 0
};

// Directed kNN graph with Gaussian edge weights w = exp(-d^2 / sigma^2).
struct KnnGraph {
  std::size_t k = 0;
  std::size_t node_count = 0;
  std::vector<KnnEdge> edges;    // grouped by source, ascending distance within a group
  std::vector<double> weights;   // parallel to edges
  double sigma = 0.0;
  double max_radius = 0.0;
};

struct AdaptiveSigma {};
struct FixedSigma {
  double value;
};
using SigmaMode = std::variant<AdaptiveSigma, FixedSigma>;

// Exact median; the mean of the two middle values for even counts.
double adaptive_sigma(std::span<const double> distances);

inline double gaussian_edge_weight(double distance, double sigma) {
  return std::exp(-(distance * distance) / (sigma * sigma));
}

// Exact k nearest neighbors of every valid point, then edges longer than
// max_radius (and zero-length edges between coincident points) are dropped.
// Adaptive sigma is the median of the retained distances; when the cutoff
// removes every edge it falls back to the median of the uncut kNN distances.
KnnGraph build_knn_graph(const PointCloud& cloud, std::size_t k, double max_radius,
                         SigmaMode sigma_mode = AdaptiveSigma{});
KnnGraph build_knn_graph(std::span<const Vec3> positions, std::size_t k, double max_radius,
                         SigmaMode sigma_mode = AdaptiveSigma{});

}  // namespace lam3c
