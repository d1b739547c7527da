#include "lam3c/config.hpp"
#include "lam3c/pipeline.hpp"
#include "lam3c/synth.hpp"
#include "lam3c/trainer.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

using namespace lam3c;

namespace {

std::vector<PointCloud> small_scenes(std::size_t count, std::uint64_t seed) {
  std::vector<PointCloud> out;
  SceneSpec base = toy_scene_spec();
  base.max_points = 400;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(ensure_normals(generate_room(sample_scene_spec(base, seed + i, 0.0)).first));
  }
  return out;
}

TrainConfig small_config(std::int64_t steps) {
  TrainConfig c = toy_train_config();
  c.total_steps = steps;
  c.batch_size = 2;
  c.record_wall_time = false;
  c.model.hidden = {16, 16};
  c.model.embedding_dim = 8;
  c.model.prototypes = 16;
  c.seed = 3;
  return c.resolved();
}

std::vector<const PointCloud*> pointers(const std::vector<PointCloud>& scenes) {
  std::vector<const PointCloud*> out;
  for (const auto& s : scenes) {
    out.push_back(&s);
  }
  return out;
}

}  // namespace

TEST(Schedule, LambdaSpotValues) {
  const Schedule s = Schedule::linear(2e-4, 3e-3, 2000);
  EXPECT_EQ(schedule_value(s, 0), 2e-4);
  EXPECT_EQ(schedule_value(s, 2000), 3e-3);
  EXPECT_NEAR(schedule_value(s, 1000), 1.6e-3, 1e-15);
  bool clamped = false;
  EXPECT_EQ(schedule_value(s, 5000, &clamped), 3e-3);
  EXPECT_TRUE(clamped);
  EXPECT_EQ(schedule_value(s, -3, &clamped), 2e-4);
  EXPECT_TRUE(clamped);
}

TEST(Schedule, CosineEndpoints) {
  const Schedule s = Schedule::cosine(0.994, 1.0, 100);
  EXPECT_NEAR(schedule_value(s, 0), 0.994, 1e-12);
  EXPECT_NEAR(schedule_value(s, 100), 1.0, 1e-12);
  EXPECT_NEAR(schedule_value(s, 50), 0.997, 1e-12);
  EXPECT_EQ(schedule_value(Schedule::constant(0.05), 7), 0.05);
}

TEST(Schedule, WarmupThenCosine) {
  EXPECT_NEAR(warmup_cosine(1e-3, 1e-5, 100, 2000, 99), 1e-3, 1e-15);
  EXPECT_LT(warmup_cosine(1e-3, 1e-5, 100, 2000, 0), 1e-4);
  EXPECT_NEAR(warmup_cosine(1e-3, 1e-5, 100, 2000, 2000), 1e-5, 1e-15);
  double prev = 1.0;
  for (int s = 100; s <= 2000; s += 50) {
    const double v = warmup_cosine(1e-3, 1e-5, 100, 2000, s);
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(UsageEntropy, Extremes) {
  EXPECT_NEAR(prototype_usage_entropy(Matrix::Constant(10, 64, 1.0 / 64.0)), std::log(64.0), 1e-12);
  EXPECT_NEAR(std::log(64.0), 4.1589, 1e-4);
  Matrix collapsed = Matrix::Zero(10, 64);
  collapsed.col(5).setOnes();
  EXPECT_EQ(prototype_usage_entropy(collapsed), 0.0);
  UsageAccumulator acc;
  EXPECT_THROW(acc.entropy(), InvalidArgument);
}

TEST(BatchIndices, EachEpochVisitsEveryScene) {
  const std::size_t scenes = 10;
  std::multiset<std::size_t> seen;
  for (std::int64_t step = 0; step < 5; ++step) {
    for (auto i : batch_indices(scenes, 2, step, 9)) {
      seen.insert(i);
    }
  }
  for (std::size_t i = 0; i < scenes; ++i) {
    EXPECT_EQ(seen.count(i), 1u);
  }
  EXPECT_EQ(batch_indices(scenes, 4, 3, 9), batch_indices(scenes, 4, 3, 9));
}

TEST(TrainConfig, Checks) {
  TrainConfig c;
  EXPECT_NO_THROW(c.check());
  c.batch_size = 0;
  EXPECT_THROW(c.check(), ConfigError);
  c = {};
  c.teacher_temperature.start = 0.0;
  EXPECT_THROW(c.check(), ConfigError);
  c = {};
  c.final_lr = 1.0;
  EXPECT_THROW(c.check(), ConfigError);
  EXPECT_EQ(TrainConfig{}.resolved().lambda.total_steps, 2000);
}

TEST(EvaluateStep, TotalGradientIsWeightedSumOfComponents) {
  const auto scenes = small_scenes(2, 10);
  const TrainConfig cfg = small_config(10);
  const TrainState state = init_train_state(cfg);
  const StepGradients g = evaluate_step(state, pointers(scenes), cfg, 4, true);
  ASSERT_TRUE(g.components.has_value());
  const auto& w = g.losses.weights;
  const std::array<double, 5> weight = {w.unmask, w.mask, w.roll, w.lambda, w.mu};
  std::vector<const Matrix*> total;
  for_each_tensor(g.total, [&](const std::string&, const Matrix& t) { total.push_back(&t); });
  std::vector<Matrix> sum;
  for (const Matrix* t : total) {
    sum.push_back(Matrix::Zero(t->rows(), t->cols()));
  }
  for (int c = 0; c < 5; ++c) {
    std::size_t i = 0;
    for_each_tensor((*g.components)[c], [&](const std::string&, const Matrix& t) { sum[i++] += weight[c] * t; });
  }
  for (std::size_t i = 0; i < total.size(); ++i) {
    EXPECT_LT((*total[i] - sum[i]).cwiseAbs().maxCoeff(), 1e-8);
  }
  EXPECT_NEAR(g.losses.total,
              w.unmask * g.losses.unmask + w.mask * g.losses.mask + w.roll * g.losses.roll +
                  w.lambda * g.losses.laplacian + w.mu * g.losses.consistency,
              1e-10);
}

TEST(EvaluateStep, RegularizersDoNotTouchClusteringTerms) {
  const auto scenes = small_scenes(2, 20);
  TrainConfig on = small_config(10);
  TrainConfig off = on;
  off.lambda = Schedule::constant(0.0, 10);
  off.loss.mu = 0.0;
  const TrainState state = init_train_state(on);
  const StepGradients a = evaluate_step(state, pointers(scenes), on, 2);
  const StepGradients b = evaluate_step(state, pointers(scenes), off, 2);
  EXPECT_EQ(a.losses.unmask, b.losses.unmask);
  EXPECT_EQ(a.losses.mask, b.losses.mask);
  EXPECT_EQ(a.losses.roll, b.losses.roll);
  EXPECT_EQ(b.losses.total, b.losses.clustering);
  EXPECT_GT(a.losses.total, a.losses.clustering);
}

TEST(TrainStep, TeacherChangesOnlyThroughEma) {
  const auto scenes = small_scenes(2, 30);
  const TrainConfig cfg = small_config(10);
  TrainState state = init_train_state(cfg);
  TeacherState expected = state.teacher;
  train_step(state, pointers(scenes), cfg);
  ema_update(expected, state.student, schedule_value(cfg.ema_momentum, 0));
  EXPECT_EQ(squared_distance(expected.params, state.teacher.params), 0.0);
  EXPECT_EQ(state.step, 1);
}

TEST(TrainStep, NonFiniteLossAbortsWithDiagnostic) {
  const auto scenes = small_scenes(1, 40);
  TrainConfig cfg = small_config(10);
  cfg.batch_size = 1;
  TrainState state = init_train_state(cfg);
  for (auto& l : state.student.encoder.layers) {
    l.weight.setConstant(1e300);
  }
  try {
    train_step(state, pointers(scenes), cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(e.diagnostic.find("\"view_seed\""), std::string::npos);
  }
}

TEST(Train, DeterministicMetricsStream) {
  const auto scenes = small_scenes(3, 50);
  const TrainConfig cfg = small_config(6);
  std::ostringstream a, b;
  const TrainResult ra = train(cfg, scenes, &a);
  train(cfg, scenes, &b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(ra.metrics.size(), 6u);
  for (std::size_t i = 0; i < ra.metrics.size(); ++i) {
    EXPECT_EQ(ra.metrics[i].step, static_cast<std::int64_t>(i));
  }
  EXPECT_EQ(a.str().find("wall_time_s"), std::string::npos);
}

TEST(Train, ClusteringOnlyLossFallsOnRepeatedScene) {
  // Views are redrawn every step, so single steps are noisy; the trend is what must fall.
  const auto one = small_scenes(1, 60);
  TrainConfig cfg = small_config(50);
  cfg.batch_size = 1;
  cfg.lambda = Schedule::constant(0.0, 50);
  cfg.loss.mu = 0.0;
  cfg.teacher_temperature = Schedule::constant(0.05, 50);
  cfg.warmup_fraction = 0.0;
  cfg.base_lr = 3e-3;
  const TrainResult r = train(cfg, one);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += r.metrics[static_cast<std::size_t>(i)].total;
    last += r.metrics[static_cast<std::size_t>(40 + i)].total;
  }
  EXPECT_LT(last, first);
  for (const auto& m : r.metrics) {
    EXPECT_EQ(m.total, m.clustering);
  }
}

TEST(Metrics, JsonFieldOrder) {
  MetricsRecord r;
  r.step = 3;
  const std::string j = metrics_to_json(r);
  EXPECT_EQ(j.rfind("{\"step\":3,", 0), 0u);
  EXPECT_EQ(j.find("wall_time_s"), std::string::npos);
  r.wall_time_s = 0.5;
  EXPECT_NE(metrics_to_json(r).find("wall_time_s"), std::string::npos);
}

TEST(LaplacianEnergy, ConstantEncoderIsZero) {
  const auto scenes = small_scenes(2, 70);
  ModelParams p = init_model(ModelConfig{}, 1);
  for (auto& l : p.encoder.layers) {
    l.weight.setZero();
  }
  EXPECT_EQ(laplacian_energy(p.encoder, scenes, 8, 0.5), 0.0);
  EXPECT_GT(laplacian_energy(init_model(ModelConfig{}, 2).encoder, scenes, 8, 0.5), 0.0);
}
