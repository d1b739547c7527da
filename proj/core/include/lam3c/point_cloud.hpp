#pragma once

#include "lam3c/types.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lam3c {

// A vertex property read from a file that the library does not interpret.
// Kept so callers can inspect it; writers drop it.
struct ExtraProperty {
  std::string name;
  std::string ply_type;  // e.g. "float", "uchar"
  std::vector<double> values;
};

struct PointCloud {
  Positions positions;                    // meters
  std::optional<Positions> colors;        // components in [0, 1]
  std::optional<Positions> normals;       // unit length
  Mask valid;                             // empty means every point is valid
  std::vector<ExtraProperty> extras;

  PointCloud() = default;
  explicit PointCloud(Positions pts) : positions(std::move(pts)) {}

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  bool is_valid(std::size_t i) const { return valid.empty() || valid[i] != 0; }
  std::size_t valid_count() const;
  std::vector<std::size_t> valid_indices() const;

  // Throws InvalidArgument naming the first violated invariant.
  void check_invariants() const;

  // Points at `indices`, in that order; extras are carried along.
  PointCloud subset(std::span<const std::size_t> indices) const;
  // Only valid points; the mask is cleared.
  PointCloud compacted() const;
};

Vec3 centroid(const PointCloud& cloud);

// Rotation, translation and a positive isotropic scale: p' = scale * R p + t.
struct RigidSimilarity {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  static RigidSimilarity identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  // (this ∘ first): apply `first`, then this.
  RigidSimilarity after(const RigidSimilarity& first) const;
  RigidSimilarity inverse() const;
  double rotation_angle() const;  // radians
  bool is_valid(double tol = 1e-9) const;
};

// Positions transformed by the similarity, normals by its rotation.
PointCloud transform_cloud(const PointCloud& cloud, const RigidSimilarity& transform);

}  // namespace lam3c
