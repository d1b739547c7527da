#pragma once

#include "lam3c/types.hpp"

#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace lam3c {

struct Neighbor {
  std::size_t index;
  double squared_distance;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.squared_distance < b.squared_distance ||
           (a.squared_distance == b.squared_distance && a.index < b.index);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// dx*dx + dy*dy + dz*dz, summed in that order everywhere in the library.
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

// Balanced 3-d tree for exact nearest-neighbor queries. Results are ordered by
// (squared distance, index), so ties resolve identically to a brute-force scan.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points);
  // Only `subset` (indices into `points`) participates; reported indices still refer to `points`.
  KdTree(std::span<const Vec3> points, std::span<const std::size_t> subset);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  std::vector<Neighbor> knn(const Vec3& query, std::size_t k,
                            std::optional<std::size_t> exclude = std::nullopt) const;
  std::optional<Neighbor> nearest(const Vec3& query) const;

 private:
  struct Node {
    std::uint32_t begin;
    std::uint32_t end;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec3& query, std::size_t k, std::optional<std::size_t> exclude,
              std::vector<Neighbor>& heap) const;

  std::vector<Vec3> points_;          // reordered copy
  std::vector<std::size_t> indices_;  // original index per reordered slot
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

}  // namespace lam3c
