#include "lam3c/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace lam3c {

namespace {
constexpr std::uint32_t kLeafSize = 12;
}

KdTree::KdTree(std::span<const Vec3> points) {
  points_.assign(points.begin(), points.end());
  indices_.resize(points.size());
  std::iota(indices_.begin(), indices_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

KdTree::KdTree(std::span<const Vec3> points, std::span<const std::size_t> subset) {
  points_.reserve(subset.size());
  indices_.assign(subset.begin(), subset.end());
  for (const auto i : subset) {
    points_.push_back(points[i]);
  }
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) {
    return id;
  }

  Vec3 lo = points_[begin];
  Vec3 hi = points_[begin];
  for (auto i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[i]);
    hi = hi.cwiseMax(points_[i]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) {
    return id;  // all coincident: keep as a leaf
  }

  // Median split on the widest axis; points and indices are permuted together.
  const auto mid = begin + (end - begin) / 2;
  std::vector<std::uint32_t> order(end - begin);
  std::iota(order.begin(), order.end(), begin);
  std::nth_element(order.begin(), order.begin() + (mid - begin), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) {
                     return points_[a][axis] < points_[b][axis] ||
                            (points_[a][axis] == points_[b][axis] && indices_[a] < indices_[b]);
                   });
  std::vector<Vec3> pts(end - begin);
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < order.size(); ++i) {
    pts[i] = points_[order[i]];
    idx[i] = indices_[order[i]];
  }
  std::copy(pts.begin(), pts.end(), points_.begin() + begin);
  std::copy(idx.begin(), idx.end(), indices_.begin() + begin);

  const double split = points_[mid][axis];
  const auto left = build(begin, mid);
  const auto right = build(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::search(std::int32_t node_id, const Vec3& query, std::size_t k, std::optional<std::size_t> exclude,
                    std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (auto i = node.begin; i < node.end; ++i) {
      if (exclude && indices_[i] == *exclude) {
        continue;
      }
      const Neighbor cand{indices_[i], squared_distance(query, points_[i])};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }

  const double diff = query[node.axis] - node.split;
  const auto near_child = diff < 0.0 ? node.left : node.right;
  const auto far_child = diff < 0.0 ? node.right : node.left;
  search(near_child, query, k, exclude, heap);
  // Visit on equality too: an equidistant point with a smaller index may live there.
  if (heap.size() < k || diff * diff <= heap.front().squared_distance) {
    search(far_child, query, k, exclude, heap);
  }
}

std::vector<Neighbor> KdTree::knn(const Vec3& query, std::size_t k, std::optional<std::size_t> exclude) const {
  std::vector<Neighbor> heap;
  if (root_ < 0 || k == 0) {
    return heap;
  }
  heap.reserve(k + 1);
  search(root_, query, k, exclude, heap);
  std::sort_heap(heap.begin(), heap.end());
  return heap;
}

std::optional<Neighbor> KdTree::nearest(const Vec3& query) const {
  auto result = knn(query, 1);
  if (result.empty()) {
    return std::nullopt;
  }
  return result.front();
}

}  // namespace lam3c
