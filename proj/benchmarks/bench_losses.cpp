#include "lam3c/knn_graph.hpp"
#include "lam3c/losses.hpp"
#include "lam3c/rng.hpp"

#include <benchmark/benchmark.h>

using namespace lam3c;

namespace {

Matrix unit_rows(Eigen::Index n, Eigen::Index d, CounterRng& rng) {
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.normal();
  }
  m.rowwise().normalize();
  return m;
}

}  // namespace

static void BM_ClusteringCe(benchmark::State& state) {
  CounterRng rng(3);
  const Matrix l = unit_rows(4096, 64, rng);
  const AssignmentMatrix q = softmax_rows({unit_rows(4096, 64, rng), 0.05});
  for (auto _ : state) {
    benchmark::DoNotOptimize(clustering_ce(q, {l, 0.1}));
  }
}
BENCHMARK(BM_ClusteringCe);

static void BM_Laplacian(benchmark::State& state) {
  CounterRng rng(4);
  Positions p;
  for (int i = 0; i < 4096; ++i) {
    p.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  }
  const KnnGraph g = build_knn_graph(p, 24, 0.5);
  const Matrix z = unit_rows(4096, 32, rng);
  LossConfig cfg;
  cfg.laplacian_form = static_cast<LaplacianForm>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(laplacian_loss(z, g, cfg));
  }
}
BENCHMARK(BM_Laplacian)->Arg(0)->Arg(1);

static void BM_Consistency(benchmark::State& state) {
  CounterRng rng(5);
  Positions p;
  for (int i = 0; i < 4096; ++i) {
    p.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  }
  Positions q = p;
  for (auto& v : q) {
    v += Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.005;
  }
  const CorrespondenceSet pairs = match_correspondences(p, q, 0.05);
  const Matrix t = unit_rows(4096, 32, rng);
  const Matrix s = unit_rows(4096, 32, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(consistency_loss(t, s, pairs));
  }
}
BENCHMARK(BM_Consistency);
