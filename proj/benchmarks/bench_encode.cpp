#include "lam3c/model.hpp"
#include "lam3c/rng.hpp"

#include <benchmark/benchmark.h>

using namespace lam3c;

namespace {

PointCloud cloud(std::size_t n) {
  CounterRng rng(6);
  PointCloud c;
  Positions colors, normals;
  for (std::size_t i = 0; i < n; ++i) {
    c.positions.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
    colors.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
    normals.push_back(Vec3(rng.normal(), rng.normal(), rng.normal()).normalized());
  }
  c.colors = colors;
  c.normals = normals;
  return c;
}

}  // namespace

static void BM_Encode(benchmark::State& state) {
  const ModelParams p = init_model(ModelConfig{}, 1);
  const PointCloud c = cloud(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode(p.encoder, c));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Encode)->Arg(1024)->Arg(8192);

static void BM_EncodeBackward(benchmark::State& state) {
  const ModelParams p = init_model(ModelConfig{}, 1);
  const PointCloud c = cloud(static_cast<std::size_t>(state.range(0)));
  EncoderCache cache;
  const EmbeddingBatch z = encode(p.encoder, c, {}, &cache);
  const Matrix upstream = Matrix::Constant(z.values.rows(), z.values.cols(), 0.01);
  EncoderParams grad = zeros_like(p).encoder;
  for (auto _ : state) {
    encode_backward(p.encoder, cache, upstream, grad);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_EncodeBackward)->Arg(1024)->Arg(8192);
