#include "lam3c/trainer.hpp"

#include "lam3c/rng.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

namespace lam3c {

using nlohmann::ordered_json;

TrainConfig TrainConfig::resolved() const {
  TrainConfig out = *this;
  for (Schedule* s : {&out.teacher_temperature, &out.lambda, &out.ema_momentum, &out.weight_decay}) {
    s->total_steps = total_steps;
  }
  return out;
}

void TrainConfig::check() const {
  if (batch_size == 0) {
    throw ConfigError("batch_size must be positive");
  }
  if (total_steps <= 0) {
    throw ConfigError("total_steps must be positive");
  }
  if (!(student_temperature > 0.0) || !(teacher_temperature.start > 0.0) || !(teacher_temperature.end > 0.0)) {
    throw ConfigError("temperatures must be positive");
  }
  if (lambda.start < 0.0 || lambda.end < 0.0) {
    throw ConfigError("lambda must be non-negative");
  }
  if (ema_momentum.start < 0.0 || ema_momentum.start > 1.0 || ema_momentum.end < 0.0 || ema_momentum.end > 1.0) {
    throw ConfigError("EMA momentum must lie in [0, 1]");
  }
  if (weight_decay.start < 0.0 || weight_decay.end < 0.0) {
    throw ConfigError("weight decay must be non-negative");
  }
  if (!(base_lr > 0.0) || final_lr < 0.0 || final_lr > base_lr) {
    throw ConfigError("learning rates must satisfy 0 <= final_lr <= base_lr, base_lr > 0");
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("warmup_fraction must lie in [0, 1)");
  }
  if (sinkhorn_iterations < 1) {
    throw ConfigError("sinkhorn_iterations must be at least 1");
  }
  loss.check();
  if (laplacian_k < 1 || !(laplacian_max_radius > 0.0)) {
    throw ConfigError("laplacian_k and laplacian_max_radius must be positive");
  }
  if (laplacian_sigma && !(*laplacian_sigma > 0.0)) {
    throw ConfigError("a fixed laplacian_sigma must be positive");
  }
  if (noise_sigma < 0.0 || !(noise_dropout >= 0.0 && noise_dropout < 1.0)) {
    throw ConfigError("noise_sigma must be >= 0 and noise_dropout in [0, 1)");
  }
  if (!(correspondence_cutoff > 0.0)) {
    throw ConfigError("correspondence_cutoff must be positive");
  }
  if (model.embedding_dim < 1 || model.prototypes < 2) {
    throw ConfigError("model needs embedding_dim >= 1 and at least 2 prototypes");
  }
}

std::string metrics_to_json(const MetricsRecord& r) {
  ordered_json j;
  j["step"] = r.step;
  j["unmask"] = r.unmask;
  j["mask"] = r.mask;
  j["roll"] = r.roll;
  j["laplacian"] = r.laplacian;
  j["consistency"] = r.consistency;
  j["clustering"] = r.clustering;
  j["total"] = r.total;
  j["lambda"] = r.lambda;
  j["mu"] = r.mu;
  j["lr"] = r.learning_rate;
  j["weight_decay"] = r.weight_decay;
  j["teacher_temperature"] = r.teacher_temperature;
  j["ema_momentum"] = r.ema_momentum;
  j["usage_entropy"] = r.usage_entropy;
  j["grad_norm"] = r.grad_norm;
  j["dropped_pairs"] = r.dropped_pairs;
  if (r.wall_time_s) {
    j["wall_time_s"] = *r.wall_time_s;
  }
  return j.dump();
}

void UsageAccumulator::add(const Matrix& assignments) {
  if (assignments.rows() == 0) {
    return;
  }
  if (sum_.size() == 0) {
    sum_ = Vector::Zero(assignments.cols());
  } else if (sum_.size() != assignments.cols()) {
    throw ShapeError("assignment width changed between batches");
  }
  sum_ += assignments.colwise().sum().transpose();
  rows_ += static_cast<std::size_t>(assignments.rows());
}

Vector UsageAccumulator::mean() const {
  if (rows_ == 0) {
    throw InvalidArgument("no assignments accumulated");
  }
  return sum_ / static_cast<double>(rows_);
}

double UsageAccumulator::entropy() const {
  const Vector p = mean();
  const double mass = p.sum();
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double v = p(k) / mass;
    if (v > 0.0) {
      h -= v * std::log(v);
    }
  }
  return h;
}

double prototype_usage_entropy(const Matrix& assignments) {
  UsageAccumulator acc;
  acc.add(assignments);
  return acc.entropy();
}

namespace {

std::uint64_t model_seed(std::uint64_t seed) { return CounterRng(seed).fork("model").next_u64(); }

std::uint64_t slot_seed(std::uint64_t seed, std::int64_t step, std::size_t slot) {
  return CounterRng(seed).fork("batch").fork(static_cast<std::uint64_t>(step)).fork(slot).next_u64();
}

constexpr int kUnmask = 0;
constexpr int kMask = 1;
constexpr int kRoll = 2;
constexpr int kLaplacian = 3;
constexpr int kConsistency = 4;
constexpr int kComponents = 5;

// Student forward state for one encoded view plus its per-component embedding gradients.
struct StudentView {
  EncoderCache cache;
  Matrix embeddings;
  std::array<Matrix, kComponents> grads;

  void init_grads() {
    for (auto& g : grads) {
      g = Matrix::Zero(embeddings.rows(), embeddings.cols());
    }
  }
};

struct SceneWork {
  std::uint64_t seed = 0;
  ViewSet views;
  NoisyView noisy;
  std::array<Matrix, kGlobalViews> teacher;
  Matrix teacher_noisy;
  std::array<StudentView, kGlobalViews> masked;
  std::array<StudentView, kLocalViews> local;
  StudentView full;  // unmasked global view 0
  std::array<Positions, kGlobalViews> global_source;
  std::array<Eigen::Index, kGlobalViews> pooled_offset{};
  std::array<CorrespondenceSet, kGlobalViews> roll;
  std::array<CorrespondenceSet, kLocalViews> unmask;
  CorrespondenceSet consistency;
};

Positions source_positions(const View& view) {
  Positions out(view.cloud.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = view.source_position(i);
  }
  return out;
}

// Rows of one CE term: a student embedding row and the pooled teacher row it is matched to.
struct CeRow {
  StudentView* view;
  Eigen::Index row;
  Eigen::Index target;
};

double ce_term(std::vector<CeRow>& rows, const Matrix& q_pooled, const PrototypeHead& head, double tau_s, int component,
               Matrix& grad_projection) {
  if (rows.empty()) {
    return 0.0;
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix emb(n, head.dim());
  AssignmentMatrix q{Matrix(n, head.prototypes())};
  for (Eigen::Index r = 0; r < n; ++r) {
    emb.row(r) = rows[static_cast<std::size_t>(r)].view->embeddings.row(rows[static_cast<std::size_t>(r)].row);
    q.values.row(r) = q_pooled.row(rows[static_cast<std::size_t>(r)].target);
  }
  const LossResult ce = clustering_ce(q, prototype_logits(head, emb, tau_s));
  Matrix grad_emb = Matrix::Zero(n, head.dim());
  prototype_logits_backward(head, emb, ce.gradient, grad_emb, grad_projection);
  for (Eigen::Index r = 0; r < n; ++r) {
    const CeRow& c = rows[static_cast<std::size_t>(r)];
    c.view->grads[component].row(c.row) += grad_emb.row(r);
  }
  return ce.value;
}

bool all_finite(const ModelParams& p) {
  bool ok = true;
  for_each_tensor(p, [&](const std::string&, const Matrix& t) { ok = ok && t.allFinite(); });
  return ok;
}

}  // namespace

TrainState init_train_state(const TrainConfig& config) {
  ModelParams student = init_model(config.model, model_seed(config.seed));
  TeacherState teacher{student, config.ema_momentum.start};
  AdamW optimizer(student);
  return TrainState{std::move(student), std::move(teacher), std::move(optimizer), 0};
}

StepGradients evaluate_step(const TrainState& state, const std::vector<const PointCloud*>& batch,
                            const TrainConfig& config, std::int64_t step, bool per_component) {
  if (batch.empty()) {
    throw InvalidArgument("empty batch");
  }
  const ModelParams& student = state.student;
  const ModelParams& teacher = state.teacher.params;
  const double tau_t = schedule_value(config.teacher_temperature, step);
  const double tau_s = config.student_temperature;

  std::vector<SceneWork> work(batch.size());
  Eigen::Index pooled_rows = 0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    SceneWork& w = work[s];
    w.seed = slot_seed(config.seed, step, s);
    w.views = make_views(*batch[s], w.seed, config.views);
    const View& g0 = w.views.global_views[0];
    w.noisy = add_noise(g0.cloud, config.noise_sigma, config.noise_dropout, CounterRng(w.seed).fork("noise").next_u64());

    for (std::size_t g = 0; g < kGlobalViews; ++g) {
      const View& view = w.views.global_views[g];
      w.teacher[g] = encode(teacher.encoder, view.cloud).values;
      w.global_source[g] = source_positions(view);
      w.pooled_offset[g] = pooled_rows;
      pooled_rows += static_cast<Eigen::Index>(view.cloud.size());
      w.masked[g].embeddings = encode(student.encoder, view.cloud, w.views.masks[g], &w.masked[g].cache).values;
      w.masked[g].init_grads();
    }
    w.teacher_noisy = encode(teacher.encoder, w.noisy.cloud).values;
    for (std::size_t l = 0; l < kLocalViews; ++l) {
      const View& view = w.views.local_views[l];
      w.local[l].embeddings = encode(student.encoder, view.cloud, {}, &w.local[l].cache).values;
      w.local[l].init_grads();
    }
    w.full.embeddings = encode(student.encoder, g0.cloud, {}, &w.full.cache).values;
    w.full.init_grads();

    // Roll: masked view g against the teacher's other global view.
    for (std::size_t g = 0; g < kGlobalViews; ++g) {
      w.roll[g] = match_correspondences(w.global_source[1 - g], w.global_source[g], config.correspondence_cutoff);
    }
    Positions teacher_union = w.global_source[0];
    teacher_union.insert(teacher_union.end(), w.global_source[1].begin(), w.global_source[1].end());
    for (std::size_t l = 0; l < kLocalViews; ++l) {
      w.unmask[l] = match_correspondences(teacher_union, source_positions(w.views.local_views[l]),
                                          config.correspondence_cutoff);
    }
    Positions noisy_source(w.noisy.kept.size());
    for (std::size_t i = 0; i < noisy_source.size(); ++i) {
      noisy_source[i] = g0.source_position(w.noisy.kept[i]);
    }
    w.consistency = match_correspondences(noisy_source, w.global_source[0], config.correspondence_cutoff);
  }

  // Teacher targets: one Sinkhorn over every global-view point of the batch.
  Matrix pooled(pooled_rows, teacher.head.prototypes());
  for (const SceneWork& w : work) {
    for (std::size_t g = 0; g < kGlobalViews; ++g) {
      pooled.middleRows(w.pooled_offset[g], w.teacher[g].rows()) = w.teacher[g] * teacher.head.projection;
    }
  }
  const LogitsBatch teacher_logits{pooled, tau_t};
  const Matrix q = sinkhorn_normalize(teacher_logits, config.sinkhorn_iterations).values;

  StepGradients out;
  out.teacher_probabilities = softmax_rows(teacher_logits).values;
  std::array<Matrix, kComponents> grad_projection;
  for (auto& g : grad_projection) {
    g = Matrix::Zero(student.head.dim(), student.head.prototypes());
  }

  std::vector<CeRow> mask_rows, roll_rows, unmask_rows;
  for (SceneWork& w : work) {
    for (std::size_t g = 0; g < kGlobalViews; ++g) {
      for (Eigen::Index i = 0; i < w.masked[g].embeddings.rows(); ++i) {
        mask_rows.push_back({&w.masked[g], i, w.pooled_offset[g] + i});
      }
      for (const auto& [si, ti] : w.roll[g].pairs) {
        roll_rows.push_back({&w.masked[g], si, w.pooled_offset[1 - g] + ti});
      }
      out.dropped_pairs += w.roll[g].dropped;
    }
    const auto n0 = static_cast<std::uint32_t>(w.global_source[0].size());
    for (std::size_t l = 0; l < kLocalViews; ++l) {
      for (const auto& [si, ti] : w.unmask[l].pairs) {
        const Eigen::Index target = ti < n0 ? w.pooled_offset[0] + ti : w.pooled_offset[1] + (ti - n0);
        unmask_rows.push_back({&w.local[l], si, target});
      }
      out.dropped_pairs += w.unmask[l].dropped;
    }
    out.dropped_pairs += w.consistency.dropped;
  }

  LossComponents parts;
  parts.unmask = ce_term(unmask_rows, q, student.head, tau_s, kUnmask, grad_projection[kUnmask]);
  parts.mask = ce_term(mask_rows, q, student.head, tau_s, kMask, grad_projection[kMask]);
  parts.roll = ce_term(roll_rows, q, student.head, tau_s, kRoll, grad_projection[kRoll]);

  const double per_scene = 1.0 / static_cast<double>(work.size());
  const SigmaMode sigma_mode =
      config.laplacian_sigma ? SigmaMode{FixedSigma{*config.laplacian_sigma}} : SigmaMode{AdaptiveSigma{}};
  for (SceneWork& w : work) {
    const View& g0 = w.views.global_views[0];
    KnnGraph graph;
    try {
      graph = build_knn_graph(g0.cloud, static_cast<std::size_t>(config.laplacian_k), config.laplacian_max_radius,
                              sigma_mode);
    } catch (const DegenerateGeometryError&) {
      continue;  // no usable edges; contributes zero
    }
    const LossResult lap = laplacian_loss(w.full.embeddings, graph, config.loss);
    parts.laplacian += per_scene * lap.value;
    w.full.grads[kLaplacian] += per_scene * lap.gradient;

    const LossResult cons = consistency_loss(w.teacher_noisy, w.masked[0].embeddings, w.consistency);
    parts.consistency += per_scene * cons.value;
    w.masked[0].grads[kConsistency] += per_scene * cons.gradient;
  }

  out.losses = total_loss(parts, config.loss, step, config.lambda);
  const LossWeights& wt = out.losses.weights;
  const std::array<double, kComponents> weight = {wt.unmask, wt.mask, wt.roll, wt.lambda, wt.mu};

  auto backward = [&](auto&& embedding_grad, auto&& projection_grad) {
    ModelParams g = zeros_like(student);
    for (SceneWork& w : work) {
      auto run = [&](StudentView& v) { encode_backward(student.encoder, v.cache, embedding_grad(v), g.encoder); };
      for (auto& v : w.masked) {
        run(v);
      }
      for (auto& v : w.local) {
        run(v);
      }
      run(w.full);
    }
    g.head.projection = projection_grad();
    return g;
  };

  out.total = backward(
      [&](const StudentView& v) {
        Matrix m = Matrix::Zero(v.embeddings.rows(), v.embeddings.cols());
        for (int c = 0; c < kComponents; ++c) {
          if (weight[c] != 0.0) {
            m += weight[c] * v.grads[c];
          }
        }
        return m;
      },
      [&]() {
        Matrix m = Matrix::Zero(student.head.dim(), student.head.prototypes());
        for (int c = 0; c < kComponents; ++c) {
          if (weight[c] != 0.0) {
            m += weight[c] * grad_projection[c];
          }
        }
        return m;
      });

  if (per_component) {
    std::array<ModelParams, kComponents> comps;
    for (int c = 0; c < kComponents; ++c) {
      comps[c] = backward([&](const StudentView& v) -> const Matrix& { return v.grads[c]; },
                          [&]() { return grad_projection[c]; });
    }
    out.components = std::move(comps);
  }

  if (!std::isfinite(out.losses.total) || !all_finite(out.total)) {
    ordered_json d;
    d["step"] = step;
    d["unmask"] = parts.unmask;
    d["mask"] = parts.mask;
    d["roll"] = parts.roll;
    d["laplacian"] = parts.laplacian;
    d["consistency"] = parts.consistency;
    d["teacher_temperature"] = tau_t;
    d["scenes"] = ordered_json::array();
    for (std::size_t s = 0; s < work.size(); ++s) {
      const SceneWork& w = work[s];
      d["scenes"].push_back({{"slot", s},
                             {"view_seed", w.seed},
                             {"points", batch[s]->size()},
                             {"global_points", {w.views.global_views[0].cloud.size(), w.views.global_views[1].cloud.size()}},
                             {"consistency_pairs", w.consistency.pairs.size()}});
    }
    throw NumericError("non-finite loss or gradient at step " + std::to_string(step), d.dump(2));
  }
  return out;
}

MetricsRecord train_step(TrainState& state, const std::vector<const PointCloud*>& batch, const TrainConfig& config,
                         UsageAccumulator* usage) {
  const auto start = std::chrono::steady_clock::now();
  const std::int64_t step = state.step;
  const StepGradients g = evaluate_step(state, batch, config, step);

  const auto warmup = static_cast<std::int64_t>(std::llround(config.warmup_fraction * static_cast<double>(config.total_steps)));
  const double lr = warmup_cosine(config.base_lr, config.final_lr, warmup, config.total_steps, step);
  const double wd = schedule_value(config.weight_decay, step);
  state.optimizer.step(state.student, g.total, lr, wd);
  const double m = schedule_value(config.ema_momentum, step);
  ema_update(state.teacher, state.student, m);
  ++state.step;

  if (usage != nullptr) {
    usage->add(g.teacher_probabilities);
  }
  MetricsRecord r;
  r.step = step;
  r.unmask = g.losses.unmask;
  r.mask = g.losses.mask;
  r.roll = g.losses.roll;
  r.laplacian = g.losses.laplacian;
  r.consistency = g.losses.consistency;
  r.clustering = g.losses.clustering;
  r.total = g.losses.total;
  r.lambda = g.losses.weights.lambda;
  r.mu = g.losses.weights.mu;
  r.learning_rate = lr;
  r.weight_decay = wd;
  r.teacher_temperature = schedule_value(config.teacher_temperature, step);
  r.ema_momentum = m;
  r.usage_entropy = prototype_usage_entropy(g.teacher_probabilities);
  r.grad_norm = std::sqrt(squared_norm(g.total));
  r.dropped_pairs = g.dropped_pairs;
  if (config.record_wall_time) {
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return r;
}

std::vector<std::size_t> batch_indices(std::size_t scene_count, std::size_t batch_size, std::int64_t step,
                                       std::uint64_t seed) {
  if (scene_count == 0) {
    throw InvalidArgument("no scenes to batch");
  }
  std::vector<std::size_t> out;
  std::uint64_t cached_epoch = ~0ULL;
  std::vector<std::size_t> perm(scene_count);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::uint64_t flat = static_cast<std::uint64_t>(step) * batch_size + b;
    const std::uint64_t epoch = flat / scene_count;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      CounterRng rng = CounterRng(seed).fork("epoch").fork(epoch);
      rng.shuffle(perm);
      cached_epoch = epoch;
    }
    out.push_back(perm[flat % scene_count]);
  }
  return out;
}

TrainResult train(const TrainConfig& raw_config, const std::vector<PointCloud>& scenes, std::ostream* metrics_jsonl,
                  const std::function<void(const MetricsRecord&)>& on_step) {
  const TrainConfig config = raw_config.resolved();
  config.check();
  if (scenes.empty()) {
    throw InvalidArgument("training needs at least one scene");
  }
  TrainResult result{init_train_state(config), {}, 0.0};
  const auto epoch_steps =
      static_cast<std::int64_t>((scenes.size() + config.batch_size - 1) / config.batch_size);
  UsageAccumulator final_usage;
  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    std::vector<const PointCloud*> batch;
    for (const auto i : batch_indices(scenes.size(), config.batch_size, step, config.seed)) {
      batch.push_back(&scenes[i]);
    }
    const bool last_epoch = step >= config.total_steps - epoch_steps;
    MetricsRecord r = train_step(result.state, batch, config, last_epoch ? &final_usage : nullptr);
    if (metrics_jsonl != nullptr) {
      *metrics_jsonl << metrics_to_json(r) << '\n';
    }
    if (on_step) {
      on_step(r);
    }
    result.metrics.push_back(std::move(r));
  }
  result.final_epoch_usage_entropy = final_usage.entropy();
  return result;
}

double laplacian_energy(const EncoderParams& encoder, const std::vector<PointCloud>& scenes, int k, double max_radius) {
  if (scenes.empty()) {
    throw InvalidArgument("no scenes");
  }
  LossConfig pairwise;
  pairwise.laplacian_form = LaplacianForm::pairwise;
  double total = 0.0;
  for (const PointCloud& scene : scenes) {
    const KnnGraph graph = build_knn_graph(scene, static_cast<std::size_t>(k), max_radius);
    total += laplacian_loss(encode(encoder, scene).values, graph, pairwise).value;
  }
  return total / static_cast<double>(scenes.size());
}

}  // namespace lam3c
