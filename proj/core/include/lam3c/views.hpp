#pragma once

#include "lam3c/point_cloud.hpp"

#include <array>

namespace lam3c {

inline constexpr std::size_t kGlobalViews = 2;
inline constexpr std::size_t kLocalViews = 4;

struct CropRange {
  double min_fraction = 0.0;
  double max_fraction = 1.0;
};

struct ViewConfig {
  CropRange global_crop{0.55, 1.0};
  CropRange local_crop{0.10, 0.25};
  bool random_rotation = true;  // about z
  bool random_flip = true;      // x and y independently
  double jitter_sigma = 0.005;  // meters
  double color_jitter = 0.05;
  double mask_grid = 0.1;       // meters
  double mask_ratio = 0.3;
  std::size_t min_points = 256;
};

// view = linear * (source - center) + jitter, with `linear` orthogonal
// (rotation about z, possibly composed with axis flips).
struct ViewTransform {
  Mat3 linear = Mat3::Identity();
  Vec3 center = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return linear * (p - center); }
  Vec3 invert(const Vec3& q) const { return linear.transpose() * q + center; }
};

struct View {
  PointCloud cloud;
  std::vector<std::size_t> source_indices;  // into the scene, ascending
  ViewTransform transform;
  Positions jitter;  // per point, already added to cloud.positions

  // Scene-frame coordinates of point i, jitter removed.
  Vec3 source_position(std::size_t i) const { return transform.invert(cloud.positions[i] - jitter[i]); }
};

struct ViewSet {
  std::array<View, kGlobalViews> global_views;
  std::array<View, kLocalViews> local_views;
  std::array<Mask, kGlobalViews> masks;  // student-side mask per global view
};

// Two global crops and four local crops, each a ball around a random center,
// re-centered and randomly rotated, flipped and jittered. Every random draw
// comes from streams forked off `seed`.
ViewSet make_views(const PointCloud& scene, std::uint64_t seed, const ViewConfig& config = {});

// A single crop: the `fraction` of scene points nearest to scene point `center_index`.
std::vector<std::size_t> ball_crop(const PointCloud& scene, std::size_t center_index, double fraction);

// Voxel-aligned random mask: whole voxels of side `grid_size` are taken in
// random order until at least `ratio` of the points are masked.
Mask grid_mask(const PointCloud& view, double grid_size, double ratio, std::uint64_t seed);

struct NoisyView {
  PointCloud cloud;
  std::vector<std::size_t> kept;  // indices into the input view
  Positions noise;                // added offsets, per kept point
};

// Independent point dropout with probability `dropout`, then Gaussian
// coordinate noise of std `sigma` on the survivors.
NoisyView add_noise(const PointCloud& view, double sigma, double dropout, std::uint64_t seed);

}  // namespace lam3c
