#include "lam3c/rng.hpp"
#include "lam3c/sinkhorn.hpp"

#include <benchmark/benchmark.h>

using namespace lam3c;

static void BM_Sinkhorn(benchmark::State& state) {
  const auto b = static_cast<Eigen::Index>(state.range(0));
  const auto k = static_cast<Eigen::Index>(state.range(1));
  CounterRng rng(2);
  Matrix m(b, k);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.normal();
  }
  const LogitsBatch logits{m, 0.05};
  for (auto _ : state) {
    benchmark::DoNotOptimize(sinkhorn_normalize(logits, 3));
  }
}
BENCHMARK(BM_Sinkhorn)->Args({1024, 64})->Args({4096, 64})->Args({8192, 256});
