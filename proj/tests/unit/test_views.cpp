#include "lam3c/synth.hpp"
#include "lam3c/views.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

using namespace lam3c;
using lam3c::test::uniform_cube;

namespace {

PointCloud room(std::size_t points, std::uint64_t seed) {
  SceneSpec s;
  s.max_points = points;
  s.seed = seed;
  PointCloud c = generate_room(s).first;
  c.colors = Positions(c.size(), Vec3(0.5, 0.4, 0.3));
  return c;
}

bool same_view(const View& a, const View& b) {
  return a.cloud.positions == b.cloud.positions && a.source_indices == b.source_indices &&
         a.transform.linear == b.transform.linear && a.transform.center == b.transform.center && a.jitter == b.jitter &&
         a.cloud.colors == b.cloud.colors;
}

}  // namespace

TEST(Views, Counts) {
  const ViewSet v = make_views(room(4000, 1), 7);
  EXPECT_EQ(v.global_views.size(), 2u);
  EXPECT_EQ(v.local_views.size(), 4u);
  for (std::size_t g = 0; g < 2; ++g) {
    EXPECT_EQ(v.masks[g].size(), v.global_views[g].cloud.size());
  }
}

TEST(Views, DeterministicForSeed) {
  const PointCloud scene = room(3000, 2);
  const ViewSet a = make_views(scene, 11);
  const ViewSet b = make_views(scene, 11);
  for (std::size_t g = 0; g < 2; ++g) {
    EXPECT_TRUE(same_view(a.global_views[g], b.global_views[g]));
    EXPECT_EQ(a.masks[g], b.masks[g]);
  }
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_TRUE(same_view(a.local_views[l], b.local_views[l]));
  }
  const ViewSet c = make_views(scene, 12);
  EXPECT_FALSE(same_view(a.global_views[0], c.global_views[0]));
}

TEST(Views, CropFractions) {
  const PointCloud scene = room(5000, 3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ViewSet v = make_views(scene, seed);
    for (const auto& g : v.global_views) {
      EXPECT_GE(g.cloud.size(), static_cast<std::size_t>(0.4 * scene.size()));
    }
    for (const auto& l : v.local_views) {
      EXPECT_GE(l.cloud.size(), static_cast<std::size_t>(0.10 * scene.size()) - 1);
      EXPECT_LE(l.cloud.size(), static_cast<std::size_t>(0.25 * scene.size()) + 1);
    }
  }
}

TEST(Views, SourcePositionsRecoverScene) {
  const PointCloud scene = room(3000, 4);
  const ViewSet v = make_views(scene, 5);
  auto check = [&](const View& view) {
    ASSERT_EQ(view.source_indices.size(), view.cloud.size());
    EXPECT_TRUE(std::is_sorted(view.source_indices.begin(), view.source_indices.end()));
    for (std::size_t i = 0; i < view.cloud.size(); ++i) {
      ASSERT_LT(view.source_indices[i], scene.size());
      EXPECT_LT((view.source_position(i) - scene.positions[view.source_indices[i]]).norm(), 1e-6);
    }
  };
  for (const auto& g : v.global_views) {
    check(g);
  }
  for (const auto& l : v.local_views) {
    check(l);
  }
}

TEST(Views, FullCropWithoutJitterIsRotatedScene) {
  const PointCloud scene = room(2000, 6);
  ViewConfig cfg;
  cfg.global_crop = {1.0, 1.0};
  cfg.jitter_sigma = 0.0;
  cfg.color_jitter = 0.0;
  const ViewSet v = make_views(scene, 9, cfg);
  const View& g = v.global_views[0];
  ASSERT_EQ(g.cloud.size(), scene.size());
  // Orthogonal map: pairwise distances are preserved.
  for (std::size_t i = 1; i < 200; ++i) {
    EXPECT_NEAR((g.cloud.positions[i] - g.cloud.positions[0]).norm(),
                (scene.positions[i] - scene.positions[0]).norm(), 1e-12);
  }
}

TEST(Views, GlobalViewsOverlap) {
  const PointCloud scene = room(10000, 7);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ViewSet v = make_views(scene, seed);
    std::vector<std::size_t> shared;
    std::set_intersection(v.global_views[0].source_indices.begin(), v.global_views[0].source_indices.end(),
                          v.global_views[1].source_indices.begin(), v.global_views[1].source_indices.end(),
                          std::back_inserter(shared));
    EXPECT_GE(static_cast<double>(shared.size()), 0.05 * static_cast<double>(scene.size()));
  }
}

TEST(Views, TooFewPoints) { EXPECT_THROW(make_views(uniform_cube(100, 1), 1), EmptyCloudError); }

TEST(GridMask, RatioEndpoints) {
  const PointCloud c = uniform_cube(1000, 8);
  const Mask none = grid_mask(c, 0.1, 0.0, 1);
  EXPECT_EQ(std::count(none.begin(), none.end(), 1), 0);
  const Mask all = grid_mask(c, 0.1, 1.0, 1);
  EXPECT_EQ(std::count(all.begin(), all.end(), 1), 1000);
  EXPECT_THROW(grid_mask(c, 0.0, 0.3, 1), InvalidArgument);
  EXPECT_THROW(grid_mask(c, 0.1, 1.5, 1), InvalidArgument);
}

TEST(GridMask, VoxelAligned) {
  const PointCloud c = uniform_cube(2000, 9);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Mask m = grid_mask(c, 0.2, 0.3, seed);
    std::map<std::tuple<long, long, long>, int> state;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto& p = c.positions[i];
      const auto key = std::make_tuple(static_cast<long>(std::floor(p.x() / 0.2)),
                                       static_cast<long>(std::floor(p.y() / 0.2)),
                                       static_cast<long>(std::floor(p.z() / 0.2)));
      auto [it, inserted] = state.emplace(key, m[i]);
      if (!inserted) {
        EXPECT_EQ(it->second, m[i]);
      }
    }
  }
}

TEST(Noise, Identity) {
  const PointCloud c = uniform_cube(100, 10);
  const NoisyView n = add_noise(c, 0.0, 0.0, 1);
  EXPECT_EQ(n.cloud.positions, c.positions);
  EXPECT_EQ(n.kept.size(), c.size());
}

TEST(Noise, DropoutExpectation) {
  const PointCloud c = uniform_cube(1000, 11);
  const NoisyView n = add_noise(c, 0.0, 0.5, 2);
  // 4.5 binomial standard deviations.
  EXPECT_NEAR(static_cast<double>(n.kept.size()), 500.0, 4.5 * std::sqrt(250.0));
  EXPECT_TRUE(std::is_sorted(n.kept.begin(), n.kept.end()));
}

TEST(Noise, SigmaVariance) {
  const PointCloud c = uniform_cube(10000, 12);
  const NoisyView n = add_noise(c, 0.01, 0.0, 3);
  for (int axis = 0; axis < 3; ++axis) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double d = n.cloud.positions[i][axis] - c.positions[i][axis];
      s += d;
      s2 += d * d;
    }
    const double mean = s / 10000.0;
    const double var = s2 / 10000.0 - mean * mean;
    EXPECT_NEAR(var, 1e-4, 0.2e-4);
  }
  EXPECT_THROW(add_noise(c, -1.0, 0.0, 1), InvalidArgument);
  EXPECT_THROW(add_noise(c, 0.0, 1.0, 1), InvalidArgument);
}

TEST(CounterRng, ReferenceStream) {
  // The published splitmix64 stream for seed 0.
  CounterRng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next_u64(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(rng.next_u64(), 0x06c45d188009454fULL);
  EXPECT_EQ(splitmix64(0), 0xe220a8397b1dcdafULL);
  EXPECT_NE(rng.fork("a").next_u64(), rng.fork("b").next_u64());
  EXPECT_EQ(rng.counter(), 3u);
}

TEST(CounterRng, UniformAndBelow) {
  CounterRng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(rng.below(7), 7u);
  }
  const auto s = sample_without_replacement(100, 30, rng);
  EXPECT_EQ(s.size(), 30u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(std::adjacent_find(s.begin(), s.end()), s.end());
}
