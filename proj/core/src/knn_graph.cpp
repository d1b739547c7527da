#include "lam3c/knn_graph.hpp"

#include "lam3c/kdtree.hpp"

#include <algorithm>
#include <cmath>

namespace lam3c {

double adaptive_sigma(std::span<const double> distances) {
  if (distances.empty()) {
    throw EmptyCloudError("median of an empty distance list");
  }
  std::vector<double> d(distances.begin(), distances.end());
  const auto n = d.size();
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(d.begin(), mid, d.end());
  const double upper = *mid;
  if (n % 2 == 1) {
    return upper;
  }
  const double lower = *std::max_element(d.begin(), mid);
  return 0.5 * (lower + upper);
}

namespace {

KnnGraph build_graph(std::span<const Vec3> positions, std::span<const std::size_t> nodes, std::size_t k,
                     double max_radius, const SigmaMode& sigma_mode) {
  if (nodes.size() < 2) {
    throw EmptyCloudError("kNN graph needs at least 2 valid points");
  }
  if (k < 1) {
    throw InvalidArgument("kNN graph needs k >= 1");
  }
  if (!(max_radius > 0.0)) {
    throw InvalidArgument("kNN graph needs max_radius > 0");
  }

  const KdTree tree(positions, nodes);
  KnnGraph graph;
  graph.k = k;
  graph.node_count = positions.size();
  graph.max_radius = max_radius;

  std::vector<double> all_distances;
  all_distances.reserve(nodes.size() * k);
  for (const auto i : nodes) {
    for (const auto& nb : tree.knn(positions[i], k, i)) {
      const double d = std::sqrt(nb.squared_distance);
      if (d > 0.0) {
        all_distances.push_back(d);
      }
      if (d > 0.0 && d <= max_radius) {
        graph.edges.push_back(KnnEdge{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(nb.index), d});
      }
    }
  }

  if (std::holds_alternative<FixedSigma>(sigma_mode)) {
    graph.sigma = std::get<FixedSigma>(sigma_mode).value;
    if (!(graph.sigma > 0.0)) {
      throw InvalidArgument("fixed sigma must be positive");
    }
  } else {
    if (all_distances.empty()) {
      throw DegenerateGeometryError("all points coincide: sigma would be 0");
    }
    if (graph.edges.empty()) {
      graph.sigma = adaptive_sigma(all_distances);
    } else {
      std::vector<double> retained;
      retained.reserve(graph.edges.size());
      for (const auto& e : graph.edges) {
        retained.push_back(e.distance);
      }
      graph.sigma = adaptive_sigma(retained);
    }
  }

  graph.weights.reserve(graph.edges.size());
  for (const auto& e : graph.edges) {
    graph.weights.push_back(gaussian_edge_weight(e.distance, graph.sigma));
  }
  return graph;
}

}  // namespace

KnnGraph build_knn_graph(const PointCloud& cloud, std::size_t k, double max_radius, SigmaMode sigma_mode) {
  const auto nodes = cloud.valid_indices();
  return build_graph(cloud.positions, nodes, k, max_radius, sigma_mode);
}

KnnGraph build_knn_graph(std::span<const Vec3> positions, std::size_t k, double max_radius, SigmaMode sigma_mode) {
  std::vector<std::size_t> nodes(positions.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    nodes[i] = i;
  }
  return build_graph(positions, nodes, k, max_radius, sigma_mode);
}

}  // namespace lam3c
