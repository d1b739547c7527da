#include "lam3c/gradcheck.hpp"

#include "lam3c/knn_graph.hpp"
#include "lam3c/losses.hpp"
#include "lam3c/model.hpp"
#include "lam3c/rng.hpp"
#include "lam3c/sinkhorn.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>

namespace lam3c {

bool GradcheckReport::passed() const {
  return !entries.empty() && std::all_of(entries.begin(), entries.end(), [](const GradcheckEntry& e) { return e.passed; });
}

std::string GradcheckReport::to_json() const {
  nlohmann::ordered_json j;
  j["passed"] = passed();
  j["seconds"] = seconds;
  j["losses"] = nlohmann::ordered_json::object();
  for (const auto& e : entries) {
    j["losses"][e.loss] = {{"instances", e.instances}, {"max_relative_error", e.max_relative_error}, {"passed", e.passed}};
  }
  return j.dump(2);
}

double gradient_relative_error(const std::function<double(const Matrix&)>& f, const Matrix& x, const Matrix& analytic,
                               double step) {
  Matrix probe = x;
  Matrix numeric(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double saved = probe(i, j);
      probe(i, j) = saved + step;
      const double up = f(probe);
      probe(i, j) = saved - step;
      const double down = f(probe);
      probe(i, j) = saved;
      numeric(i, j) = (up - down) / (2.0 * step);
    }
  }
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-12});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, CounterRng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = scale * rng.normal();
    }
  }
  return m;
}

Eigen::Index random_size(CounterRng& rng, Eigen::Index lo, Eigen::Index hi) {
  return lo + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

double check_ce(CounterRng& rng, double step) {
  const Eigen::Index b = random_size(rng, 2, 32);
  const Eigen::Index k = random_size(rng, 2, 16);
  const double tau = rng.uniform(0.05, 1.0);
  const AssignmentMatrix q = sinkhorn_normalize(LogitsBatch{random_matrix(b, k, rng), rng.uniform(0.1, 1.0)});
  const Matrix logits = random_matrix(b, k, rng, 0.5);
  const LossResult r = clustering_ce(q, LogitsBatch{logits, tau});
  return gradient_relative_error([&](const Matrix& x) { return clustering_ce(q, LogitsBatch{x, tau}).value; }, logits,
                                 r.gradient, step);
}

struct GraphInstance {
  Matrix z;
  KnnGraph graph;
};

GraphInstance graph_instance(CounterRng& rng) {
  while (true) {
    const Eigen::Index n = random_size(rng, 4, 32);
    const Eigen::Index d = random_size(rng, 2, 16);
    Positions pts(static_cast<std::size_t>(n));
    for (auto& p : pts) {
      p = Vec3(rng.uniform(), rng.uniform(), rng.uniform()) * 0.3;
    }
    const auto k = static_cast<std::size_t>(random_size(rng, 1, std::min<Eigen::Index>(8, n - 1)));
    KnnGraph graph = build_knn_graph(pts, k, 0.25);
    if (!graph.edges.empty()) {
      return {random_matrix(n, d, rng, rng.uniform(0.05, 0.6)), std::move(graph)};
    }
  }
}

double check_laplacian(CounterRng& rng, LaplacianForm form, double step, double kink_margin) {
  LossConfig config;
  config.laplacian_form = form;
  config.huber_delta = 0.5;
  while (true) {
    GraphInstance g = graph_instance(rng);
    if (form == LaplacianForm::huber_residual) {
      // Residual norms near delta would let the finite difference straddle the kink.
      std::vector<double> num(static_cast<std::size_t>(g.z.rows()), 0.0);
      Matrix mean = Matrix::Zero(g.z.rows(), g.z.cols());
      for (std::size_t e = 0; e < g.graph.edges.size(); ++e) {
        const auto& edge = g.graph.edges[e];
        mean.row(static_cast<Eigen::Index>(edge.source)) += g.graph.weights[e] * g.z.row(static_cast<Eigen::Index>(edge.target));
        num[edge.source] += g.graph.weights[e];
      }
      bool near_kink = false;
      for (Eigen::Index i = 0; i < g.z.rows(); ++i) {
        if (num[static_cast<std::size_t>(i)] > 0.0) {
          const double r = (g.z.row(i) - mean.row(i) / num[static_cast<std::size_t>(i)]).norm();
          near_kink = near_kink || std::abs(r - config.huber_delta) < kink_margin;
        }
      }
      if (near_kink) {
        continue;
      }
    }
    const LossResult r = laplacian_loss(g.z, g.graph, config);
    return gradient_relative_error([&](const Matrix& x) { return laplacian_loss(x, g.graph, config).value; }, g.z,
                                   r.gradient, step);
  }
}

double check_consistency(CounterRng& rng, double step) {
  const Eigen::Index n = random_size(rng, 1, 32);
  const Eigen::Index m = random_size(rng, 1, 32);
  const Eigen::Index d = random_size(rng, 1, 16);
  const Matrix teacher = random_matrix(m, d, rng);
  const Matrix student = random_matrix(n, d, rng);
  CorrespondenceSet pairs;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rng.bernoulli(0.8) || pairs.pairs.empty()) {
      pairs.pairs.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(rng.below(static_cast<std::uint64_t>(m))));
    }
  }
  const LossResult r = consistency_loss(teacher, student, pairs);
  return gradient_relative_error([&](const Matrix& x) { return consistency_loss(teacher, x, pairs).value; }, student,
                                 r.gradient, step);
}

double check_prototype_logits(CounterRng& rng, double step) {
  const Eigen::Index n = random_size(rng, 1, 32);
  const Eigen::Index d = random_size(rng, 1, 16);
  const Eigen::Index k = random_size(rng, 2, 16);
  PrototypeHead head{random_matrix(d, k, rng)};
  head.normalize_columns();
  const Matrix emb = random_matrix(n, d, rng);
  const Matrix weight = random_matrix(n, k, rng);
  Matrix grad_emb = Matrix::Zero(n, d);
  Matrix grad_proj = Matrix::Zero(d, k);
  prototype_logits_backward(head, emb, weight, grad_emb, grad_proj);
  const double e1 = gradient_relative_error(
      [&](const Matrix& x) { return prototype_logits(head, x, 1.0).values.cwiseProduct(weight).sum(); }, emb, grad_emb,
      step);
  const double e2 = gradient_relative_error(
      [&](const Matrix& x) { return prototype_logits(PrototypeHead{x}, emb, 1.0).values.cwiseProduct(weight).sum(); },
      head.projection, grad_proj, step);
  return std::max(e1, e2);
}

double check_encoder(CounterRng& rng, double step) {
  ModelConfig config;
  config.hidden = {static_cast<int>(random_size(rng, 2, 12)), static_cast<int>(random_size(rng, 2, 12))};
  config.embedding_dim = static_cast<int>(random_size(rng, 2, 8));
  config.prototypes = 4;
  const ModelParams params = init_model(config, rng.next_u64());
  const auto n = static_cast<std::size_t>(random_size(rng, 2, 12));
  PointCloud cloud;
  Positions colors, normals;
  for (std::size_t i = 0; i < n; ++i) {
    cloud.positions.emplace_back(rng.normal(), rng.normal(), rng.normal());
    colors.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
    normals.push_back(Vec3(rng.normal(), rng.normal(), rng.normal()).normalized());
  }
  cloud.colors = colors;
  cloud.normals = normals;
  Mask mask(n, 0);
  for (auto& m : mask) {
    m = rng.bernoulli(0.4) ? 1 : 0;
  }
  mask[0] = 1;
  EncoderParams encoder = params.encoder;
  encoder.mask_token = random_matrix(1, kMaskedFeatures, rng, 0.5);
  EncoderCache cache;
  const Matrix z = encode(encoder, cloud, mask, &cache).values;
  const Matrix weight = random_matrix(z.rows(), z.cols(), rng);
  EncoderParams grads = zeros_like(ModelParams{encoder, params.head}).encoder;
  encode_backward(encoder, cache, weight, grads);

  double worst = 0.0;
  auto loss = [&](const EncoderParams& p) { return encode(p, cloud, mask).values.cwiseProduct(weight).sum(); };
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    worst = std::max(worst, gradient_relative_error(
                                [&](const Matrix& x) {
                                  EncoderParams p = encoder;
                                  p.layers[l].weight = x;
                                  return loss(p);
                                },
                                encoder.layers[l].weight, grads.layers[l].weight, step));
    worst = std::max(worst, gradient_relative_error(
                                [&](const Matrix& x) {
                                  EncoderParams p = encoder;
                                  p.layers[l].bias = x;
                                  return loss(p);
                                },
                                encoder.layers[l].bias, grads.layers[l].bias, step));
  }
  worst = std::max(worst, gradient_relative_error(
                              [&](const Matrix& x) {
                                EncoderParams p = encoder;
                                p.mask_token = x;
                                return loss(p);
                              },
                              encoder.mask_token, grads.mask_token, step));
  return worst;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.instances < 1 || !(options.step > 0.0) || !(options.tolerance > 0.0)) {
    throw InvalidArgument("gradcheck needs instances >= 1 and positive step and tolerance");
  }
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport report;
  const CounterRng root(options.seed);
  auto run = [&](const std::string& name, const std::function<double(CounterRng&)>& one) {
    CounterRng rng = root.fork(name);
    GradcheckEntry e{name, options.instances, 0.0, false};
    for (int i = 0; i < options.instances; ++i) {
      const double err = one(rng);
      e.max_relative_error = std::isfinite(err) ? std::max(e.max_relative_error, err) : INFINITY;
    }
    e.passed = e.max_relative_error < options.tolerance;
    report.entries.push_back(e);
  };
  const double h = options.step;
  run("clustering_ce", [&](CounterRng& rng) { return check_ce(rng, h); });
  run("laplacian_pairwise", [&](CounterRng& rng) { return check_laplacian(rng, LaplacianForm::pairwise, h, options.kink_margin); });
  run("laplacian_huber_residual",
      [&](CounterRng& rng) { return check_laplacian(rng, LaplacianForm::huber_residual, h, options.kink_margin); });
  run("consistency", [&](CounterRng& rng) { return check_consistency(rng, h); });
  run("prototype_logits", [&](CounterRng& rng) { return check_prototype_logits(rng, h); });
  run("encoder", [&](CounterRng& rng) { return check_encoder(rng, h); });
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace lam3c
