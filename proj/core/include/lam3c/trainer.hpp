#pragma once

#include "lam3c/losses.hpp"
#include "lam3c/model.hpp"
#include "lam3c/optimizer.hpp"
#include "lam3c/schedule.hpp"
#include "lam3c/views.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lam3c {

struct TrainConfig {
  std::size_t batch_size = 4;
  std::int64_t total_steps = 2000;
  std::uint64_t seed = 0;

  double student_temperature = 0.1;
  Schedule teacher_temperature = Schedule::linear(0.04, 0.07, 1);
  Schedule lambda = Schedule::linear(2e-4, 3e-3, 1);
  Schedule ema_momentum = Schedule::cosine(0.994, 1.0, 1);
  Schedule weight_decay = Schedule::linear(0.04, 0.10, 1);
  double base_lr = 1e-3;
  double final_lr = 1e-5;
  double warmup_fraction = 0.05;
  int sinkhorn_iterations = 3;

  LossConfig loss;  // loss.lambda is ignored in favor of the schedule; loss.mu is used as-is

  int laplacian_k = 24;
  double laplacian_max_radius = 0.08;
  std::optional<double> laplacian_sigma;  // empty: adaptive median
  double noise_sigma = 0.01;
  double noise_dropout = 0.1;
  double correspondence_cutoff = 0.05;

  ModelConfig model;
  ViewConfig views;
  bool record_wall_time = true;

  // Every schedule's total_steps set to total_steps.
  TrainConfig resolved() const;
  void check() const;
};

struct MetricsRecord {
  std::int64_t step = 0;
  double unmask = 0.0;
  double mask = 0.0;
  double roll = 0.0;
  double laplacian = 0.0;
  double consistency = 0.0;
  double clustering = 0.0;
  double total = 0.0;
  double lambda = 0.0;
  double mu = 0.0;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  double teacher_temperature = 0.0;
  double ema_momentum = 0.0;
  double usage_entropy = 0.0;  // of this batch's mean teacher distribution, nats
  double grad_norm = 0.0;
  std::size_t dropped_pairs = 0;
  std::optional<double> wall_time_s;
};

std::string metrics_to_json(const MetricsRecord& record);

// Raised when a loss or gradient becomes non-finite; `diagnostic` is a JSON
// document describing the batch.
class NumericError : public Error {
 public:
  NumericError(const std::string& message, std::string diagnostic)
      : Error(message), diagnostic(std::move(diagnostic)) {}
  std::string diagnostic;
};

// Mean of the rows of teacher assignments, accumulated across batches.
class UsageAccumulator {
 public:
  void add(const Matrix& assignments);
  bool empty() const { return rows_ == 0; }
  Vector mean() const;
  double entropy() const;  // nats; throws on an empty accumulation

 private:
  Vector sum_;
  std::size_t rows_ = 0;
};

double prototype_usage_entropy(const Matrix& assignments);

struct TrainState {
  ModelParams student;
  TeacherState teacher;
  AdamW optimizer;
  std::int64_t step = 0;
};

TrainState init_train_state(const TrainConfig& config);

struct StepGradients {
  LossBreakdown losses;
  ModelParams total;
  // Parameter gradient of each unweighted component: unmask, mask, roll, laplacian, consistency.
  std::optional<std::array<ModelParams, 5>> components;
  Matrix teacher_probabilities;  // softmax of teacher logits over both global views of the batch
  std::size_t dropped_pairs = 0;
};

// Forward and backward pass for one batch at `step`; no parameters change.
// Views and noise draw from streams keyed by (seed, step, slot), so the
// random draws do not depend on the loss weights.
StepGradients evaluate_step(const TrainState& state, const std::vector<const PointCloud*>& batch,
                            const TrainConfig& config, std::int64_t step, bool per_component = false);

// One optimizer step and EMA update at state.step, which then advances.
MetricsRecord train_step(TrainState& state, const std::vector<const PointCloud*>& batch, const TrainConfig& config,
                         UsageAccumulator* usage = nullptr);

// Scene indices for `step`: consecutive batches through a per-epoch shuffle.
std::vector<std::size_t> batch_indices(std::size_t scene_count, std::size_t batch_size, std::int64_t step,
                                       std::uint64_t seed);

struct TrainResult {
  TrainState state;
  std::vector<MetricsRecord> metrics;
  double final_epoch_usage_entropy = 0.0;  // over the last ceil(scenes / batch) steps
};

// Scenes need colors and normals (missing ones are zero-filled by the encoder).
TrainResult train(const TrainConfig& config, const std::vector<PointCloud>& scenes, std::ostream* metrics_jsonl = nullptr,
                  const std::function<void(const MetricsRecord&)>& on_step = {});

// Mean pairwise graph energy of the student's embeddings over whole scenes.
double laplacian_energy(const EncoderParams& encoder, const std::vector<PointCloud>& scenes, int k,
                        double max_radius);

}  // namespace lam3c
