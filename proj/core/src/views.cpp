#include "lam3c/views.hpp"

#include "lam3c/kdtree.hpp"
#include "lam3c/rng.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <tuple>

namespace lam3c {

std::vector<std::size_t> ball_crop(const PointCloud& scene, std::size_t center_index, double fraction) {
  const auto n = scene.size();
  const auto count = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);
  const Vec3 c = scene.positions.at(center_index);
  std::vector<std::pair<double, std::size_t>> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = {squared_distance(c, scene.positions[i]), i};
  }
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(count - 1), d.end());
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = d[i].second;
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

View make_view(const PointCloud& scene, std::vector<std::size_t> indices, CounterRng rng, const ViewConfig& config) {
  View view;
  view.source_indices = std::move(indices);
  view.cloud = scene.subset(view.source_indices);
  view.cloud.valid.clear();

  Vec3 center = Vec3::Zero();
  for (const auto& p : view.cloud.positions) {
    center += p;
  }
  center /= static_cast<double>(view.cloud.size());

  Mat3 linear = Mat3::Identity();
  CounterRng geo = rng.fork("geometry");
  if (config.random_rotation) {
    const double theta = geo.uniform(0.0, 2.0 * std::numbers::pi);
    linear = Eigen::AngleAxisd(theta, Vec3::UnitZ()).toRotationMatrix();
  }
  if (config.random_flip) {
    Mat3 flip = Mat3::Identity();
    if (geo.bernoulli(0.5)) {
      flip(0, 0) = -1.0;
    }
    if (geo.bernoulli(0.5)) {
      flip(1, 1) = -1.0;
    }
    linear = flip * linear;
  }
  view.transform = ViewTransform{linear, center};

  CounterRng jit = rng.fork("jitter");
  view.jitter.resize(view.cloud.size(), Vec3::Zero());
  for (std::size_t i = 0; i < view.cloud.size(); ++i) {
    if (config.jitter_sigma > 0.0) {
      view.jitter[i] = Vec3(jit.normal(), jit.normal(), jit.normal()) * config.jitter_sigma;
    }
    view.cloud.positions[i] = view.transform.apply(view.cloud.positions[i]) + view.jitter[i];
  }
  if (view.cloud.normals) {
    for (auto& nrm : *view.cloud.normals) {
      nrm = linear * nrm;
    }
  }
  if (view.cloud.colors && config.color_jitter > 0.0) {
    CounterRng col = rng.fork("color");
    for (auto& c : *view.cloud.colors) {
      for (int ch = 0; ch < 3; ++ch) {
        c[ch] = std::clamp(c[ch] + col.normal(0.0, config.color_jitter), 0.0, 1.0);
      }
    }
  }
  return view;
}

}  // namespace

ViewSet make_views(const PointCloud& scene, std::uint64_t seed, const ViewConfig& config) {
  if (scene.size() < config.min_points) {
    throw EmptyCloudError("view generation needs at least " + std::to_string(config.min_points) + " points");
  }
  CounterRng root(seed);
  ViewSet set;
  for (std::size_t g = 0; g < kGlobalViews; ++g) {
    CounterRng rng = root.fork(100 + g);
    CounterRng crop = rng.fork("crop");
    const auto center = static_cast<std::size_t>(crop.below(scene.size()));
    const double f = crop.uniform(config.global_crop.min_fraction, config.global_crop.max_fraction);
    set.global_views[g] = make_view(scene, ball_crop(scene, center, f), rng, config);
    set.masks[g] = grid_mask(set.global_views[g].cloud, config.mask_grid, config.mask_ratio, rng.fork("mask").next_u64());
  }
  for (std::size_t l = 0; l < kLocalViews; ++l) {
    CounterRng rng = root.fork(200 + l);
    CounterRng crop = rng.fork("crop");
    // Local crops are centered inside the global views so that they overlap the teacher's input.
    const auto& host = set.global_views[l % kGlobalViews];
    const auto center = host.source_indices[static_cast<std::size_t>(crop.below(host.source_indices.size()))];
    const double f = crop.uniform(config.local_crop.min_fraction, config.local_crop.max_fraction);
    set.local_views[l] = make_view(scene, ball_crop(scene, center, f), rng, config);
  }
  return set;
}

Mask grid_mask(const PointCloud& view, double grid_size, double ratio, std::uint64_t seed) {
  if (!(grid_size > 0.0)) {
    throw InvalidArgument("mask grid size must be positive");
  }
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw InvalidArgument("mask ratio must lie in [0, 1]");
  }
  const auto n = view.size();
  Mask mask(n, 0);
  if (n == 0 || ratio == 0.0) {
    return mask;
  }
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  std::map<Key, std::vector<std::size_t>> voxels;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& p = view.positions[i];
    voxels[Key{static_cast<std::int64_t>(std::floor(p.x() / grid_size)),
               static_cast<std::int64_t>(std::floor(p.y() / grid_size)),
               static_cast<std::int64_t>(std::floor(p.z() / grid_size))}]
        .push_back(i);
  }
  std::vector<const std::vector<std::size_t>*> order;
  order.reserve(voxels.size());
  for (const auto& [key, members] : voxels) {
    order.push_back(&members);
  }
  CounterRng rng(seed);
  rng.shuffle(order);

  const double target = ratio * static_cast<double>(n);
  std::size_t masked = 0;
  for (const auto* members : order) {
    if (static_cast<double>(masked) >= target) {
      break;
    }
    for (const auto i : *members) {
      mask[i] = 1;
    }
    masked += members->size();
  }
  return mask;
}

NoisyView add_noise(const PointCloud& view, double sigma, double dropout, std::uint64_t seed) {
  if (!(sigma >= 0.0)) {
    throw InvalidArgument("noise sigma must be non-negative");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw InvalidArgument("dropout must lie in [0, 1)");
  }
  CounterRng root(seed);
  CounterRng drop = root.fork("dropout");
  CounterRng gauss = root.fork("noise");
  NoisyView out;
  for (std::size_t i = 0; i < view.size(); ++i) {
    if (dropout > 0.0 && drop.bernoulli(dropout)) {
      continue;
    }
    out.kept.push_back(i);
  }
  out.cloud = view.subset(out.kept);
  out.noise.resize(out.kept.size(), Vec3::Zero());
  if (sigma > 0.0) {
    for (std::size_t i = 0; i < out.kept.size(); ++i) {
      out.noise[i] = Vec3(gauss.normal(), gauss.normal(), gauss.normal()) * sigma;
      out.cloud.positions[i] += out.noise[i];
    }
  }
  return out;
}

}  // namespace lam3c
