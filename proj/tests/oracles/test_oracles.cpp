#include "lam3c/kdtree.hpp"
#include "lam3c/outliers.hpp"
#include "lam3c/plane.hpp"
#include "lam3c/sinkhorn.hpp"
#include "lam3c/synth.hpp"
#include "lam3c/views.hpp"
#include "oracles/oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace lam3c;
using lam3c::test::random_matrix;
using lam3c::test::uniform_cube;

TEST(KnnOracle, MatchesFullScan) {
  CounterRng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    // Coarse lattice coordinates give plenty of exact distance ties.
    PointCloud c;
    const std::size_t n = 50 + rng.below(400);
    for (std::size_t i = 0; i < n; ++i) {
      c.positions.emplace_back(static_cast<double>(rng.below(6)), static_cast<double>(rng.below(6)),
                               0.5 * static_cast<double>(rng.below(4)));
    }
    const KdTree tree(c.positions);
    for (const std::size_t k : {1u, 8u, 24u, 32u}) {
      for (std::size_t q = 0; q < n; q += 7) {
        const auto got = tree.knn(c.positions[q], k, q);
        const auto want = oracle::knn(c.positions, c.positions[q], k, q);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
          EXPECT_EQ(got[i].index, want[i].index);
          EXPECT_EQ(got[i].squared_distance, want[i].d2);
        }
      }
    }
  }
}

TEST(SorOracle, SameSurvivors) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    SceneSpec s;
    s.seed = seed;
    s.max_points = 1500;
    s.outlier_count = 20;
    const PointCloud c = generate_room(s).first;
    const SorResult r = sor_filter(c, {16, 2.0});
    EXPECT_EQ(r.kept, oracle::sor_keep(c.positions, 16, 2.0));
  }
}

TEST(SinkhornOracle, SameIteratesAsLoops) {
  CounterRng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index b = 2 + static_cast<Eigen::Index>(rng.below(10));
    const Eigen::Index k = 2 + static_cast<Eigen::Index>(rng.below(10));
    const Matrix l = random_matrix(b, k, rng, 2.0);
    const double tau = 0.05 + rng.uniform();
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(b), std::vector<double>(static_cast<std::size_t>(k)));
    for (Eigen::Index i = 0; i < b; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) {
        rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = l(i, j);
      }
    }
    for (const int iters : {1, 3, 50}) {
      const Matrix got = sinkhorn_normalize({l, tau}, iters).values;
      const auto want = oracle::sinkhorn(rows, tau, iters);
      for (Eigen::Index i = 0; i < b; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
          EXPECT_NEAR(got(i, j), want[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], 1e-12);
        }
      }
    }
  }
}

TEST(SinkhornOracle, TwoByTwoConvergesToClosedForm) {
  CounterRng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix l = random_matrix(2, 2, rng);
    const double tau = 0.5 + rng.uniform();
    const double a = oracle::sinkhorn_2x2_limit(l(0, 0), l(0, 1), l(1, 0), l(1, 1), tau);
    const Matrix p = sinkhorn_normalize({l, tau}, 500).values;
    EXPECT_NEAR(p(0, 0), a, 1e-10);
    EXPECT_NEAR(p(1, 1), a, 1e-10);
    EXPECT_NEAR(p(0, 1), 1.0 - a, 1e-10);
  }
}

TEST(SinkhornOracle, LongRunColumnsBalance) {
  CounterRng rng(4);
  const Matrix l = random_matrix(16, 8, rng);
  const Matrix p = sinkhorn_normalize({l, 1.0}, 2000).values;
  for (Eigen::Index j = 0; j < 8; ++j) {
    EXPECT_NEAR(p.col(j).sum(), 2.0, 1e-9);
  }
}

TEST(MaskOracle, FractionWithinOneVoxelOfRatio) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const PointCloud c = uniform_cube(3000, seed, 2.0);
    const Mask m = grid_mask(c, 0.25, 0.3, seed);
    const double frac = static_cast<double>(std::count(m.begin(), m.end(), 1)) / 3000.0;
    EXPECT_GE(frac, 0.3);
    EXPECT_LE(frac, 0.3 + oracle::max_voxel_fraction(c.positions, 0.25));
  }
}

TEST(PlaneOracle, BallHasNoDominantPlane) {
  CounterRng rng(5);
  PointCloud ball;
  while (ball.size() < 3000) {
    const Vec3 p(2 * rng.uniform() - 1, 2 * rng.uniform() - 1, 2 * rng.uniform() - 1);
    if (p.norm() <= 1.0) ball.positions.push_back(p);
  }
  EXPECT_FALSE(detect_dominant_plane(ball, {512, 0.01, 0.15, 1}).has_value());
}

TEST(PlaneOracle, RefitMatchesCovarianceFit) {
  CounterRng rng(6);
  const Vec3 n = Vec3(0.1, -0.2, 1.0).normalized();
  const Vec3 u = n.unitOrthogonal();
  const Vec3 v = n.cross(u);
  PointCloud c;
  std::vector<Vec3> on_plane;
  for (int i = 0; i < 2000; ++i) {
    const Vec3 p = 4 * (rng.uniform() - 0.5) * u + 4 * (rng.uniform() - 0.5) * v + 0.003 * rng.normal() * n;
    c.positions.push_back(p);
    on_plane.push_back(p);
  }
  for (int i = 0; i < 800; ++i) {
    c.positions.emplace_back(4 * rng.uniform() - 2, 4 * rng.uniform() - 2, 0.5 + 2 * rng.uniform());
  }
  const auto plane = detect_dominant_plane(c, {512, 0.02, 0.15, 2});
  ASSERT_TRUE(plane.has_value());
  EXPECT_LT(oracle::axis_angle_deg(plane->normal, oracle::plane_normal(on_plane)), 0.2);
  EXPECT_LT(oracle::axis_angle_deg(plane->normal, n), 0.5);
}
