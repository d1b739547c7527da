#include "lam3c/kdtree.hpp"
#include "lam3c/knn_graph.hpp"
#include "lam3c/rng.hpp"

#include <benchmark/benchmark.h>

using namespace lam3c;

namespace {

Positions cube(std::size_t n) {
  CounterRng rng(1);
  Positions p;
  for (std::size_t i = 0; i < n; ++i) {
    p.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  }
  return p;
}

}  // namespace

static void BM_KdTreeBuild(benchmark::State& state) {
  const Positions p = cube(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    KdTree tree(p);
    benchmark::DoNotOptimize(tree);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KdTreeBuild)->Arg(2000)->Arg(20000);

static void BM_KdTreeKnn(benchmark::State& state) {
  const Positions p = cube(20000);
  const KdTree tree(p);
  const auto k = static_cast<std::size_t>(state.range(0));
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(tree.knn(p[q], k, q));
    q = (q + 1) % p.size();
  }
}
BENCHMARK(BM_KdTreeKnn)->Arg(1)->Arg(8)->Arg(24)->Arg(32);

static void BM_KnnGraph(benchmark::State& state) {
  const Positions p = cube(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_knn_graph(p, 24, 0.08));
  }
}
BENCHMARK(BM_KnnGraph)->Arg(1024)->Arg(8192)->Unit(benchmark::kMillisecond);
