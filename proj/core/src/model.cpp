#include "lam3c/model.hpp"

#include "lam3c/rng.hpp"

#include <cmath>

namespace lam3c {

namespace {

constexpr double kNormFloor = 1e-8;

Matrix silu(const Matrix& x) { return (x.array() / (1.0 + (-x.array()).exp())).matrix(); }

Matrix silu_grad(const Matrix& x) {
  const Matrix s = (1.0 / (1.0 + (-x.array()).exp())).matrix();
  return (s.array() * (1.0 + x.array() * (1.0 - s.array()))).matrix();
}

void check_finite(const ModelParams& params) {
  for_each_tensor(params, [](const std::string& name, const Matrix& t) {
    if (!t.allFinite()) {
      throw InvalidArgument("non-finite values in parameter " + name);
    }
  });
}

}  // namespace

void PrototypeHead::normalize_columns() {
  for (Eigen::Index k = 0; k < projection.cols(); ++k) {
    const double n = projection.col(k).norm();
    if (n > 0.0) {
      projection.col(k) /= n;
    } else {
      projection.col(k).setZero();
      projection(0, k) = 1.0;
    }
  }
}

void for_each_tensor(ModelParams& params, const std::function<void(const std::string&, Matrix&)>& fn) {
  for (std::size_t l = 0; l < params.encoder.layers.size(); ++l) {
    fn("layer" + std::to_string(l) + ".weight", params.encoder.layers[l].weight);
    fn("layer" + std::to_string(l) + ".bias", params.encoder.layers[l].bias);
  }
  fn("mask_token", params.encoder.mask_token);
  fn("prototypes", params.head.projection);
}

void for_each_tensor(const ModelParams& params,
                     const std::function<void(const std::string&, const Matrix&)>& fn) {
  for (std::size_t l = 0; l < params.encoder.layers.size(); ++l) {
    fn("layer" + std::to_string(l) + ".weight", params.encoder.layers[l].weight);
    fn("layer" + std::to_string(l) + ".bias", params.encoder.layers[l].bias);
  }
  fn("mask_token", params.encoder.mask_token);
  fn("prototypes", params.head.projection);
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  if (config.embedding_dim < 1 || config.prototypes < 2) {
    throw ConfigError("model needs embedding_dim >= 1 and prototypes >= 2");
  }
  CounterRng root(seed);
  ModelParams params;
  int in = kInputFeatures;
  std::vector<int> widths = config.hidden;
  widths.push_back(config.embedding_dim);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const int out = widths[l];
    if (out < 1) {
      throw ConfigError("layer widths must be positive");
    }
    CounterRng rng = root.fork(l + 1);
    DenseLayer layer;
    layer.weight.resize(out, in);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = rng.uniform(-bound, bound);
    }
    layer.bias = Matrix::Zero(1, out);
    params.encoder.layers.push_back(std::move(layer));
    in = out;
  }
  params.encoder.mask_token = Matrix::Zero(1, kMaskedFeatures);

  CounterRng proto_rng = root.fork("prototypes");
  params.head.projection.resize(config.embedding_dim, config.prototypes);
  for (Eigen::Index i = 0; i < params.head.projection.size(); ++i) {
    params.head.projection.data()[i] = proto_rng.normal();
  }
  params.head.normalize_columns();
  return params;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams out = params;
  for_each_tensor(out, [](const std::string&, Matrix& t) { t.setZero(); });
  return out;
}

bool same_shapes(const ModelParams& a, const ModelParams& b) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> sa;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> sb;
  for_each_tensor(a, [&](const std::string&, const Matrix& t) { sa.emplace_back(t.rows(), t.cols()); });
  for_each_tensor(b, [&](const std::string&, const Matrix& t) { sb.emplace_back(t.rows(), t.cols()); });
  return sa == sb;
}

double squared_norm(const ModelParams& params) {
  double s = 0.0;
  for_each_tensor(params, [&](const std::string&, const Matrix& t) { s += t.squaredNorm(); });
  return s;
}

double squared_distance(const ModelParams& a, const ModelParams& b) {
  if (!same_shapes(a, b)) {
    throw ShapeError("parameter sets differ in shape");
  }
  std::vector<const Matrix*> tb;
  for_each_tensor(b, [&](const std::string&, const Matrix& t) { tb.push_back(&t); });
  double s = 0.0;
  std::size_t i = 0;
  for_each_tensor(a, [&](const std::string&, const Matrix& t) { s += (t - *tb[i++]).squaredNorm(); });
  return s;
}

Matrix input_features(const PointCloud& cloud, const EncoderParams& params, std::span<const std::uint8_t> mask,
                      bool* substituted) {
  const auto n = static_cast<Eigen::Index>(cloud.size());
  if (!mask.empty() && mask.size() != cloud.size()) {
    throw ShapeError("mask length does not match the cloud");
  }
  Matrix x = Matrix::Zero(n, kInputFeatures);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i).segment<3>(0) = cloud.positions[static_cast<std::size_t>(i)].transpose();
    if (cloud.colors) {
      x.row(i).segment<3>(3) = (*cloud.colors)[static_cast<std::size_t>(i)].transpose();
    }
    if (cloud.normals) {
      x.row(i).segment<3>(6) = (*cloud.normals)[static_cast<std::size_t>(i)].transpose();
    }
    if (!mask.empty() && mask[static_cast<std::size_t>(i)] != 0) {
      x.row(i).segment<kMaskedFeatures>(3) = params.mask_token.row(0);
    }
  }
  if (substituted != nullptr) {
    *substituted = !cloud.colors || !cloud.normals;
  }
  return x;
}

Matrix encode_features(const EncoderParams& params, const Matrix& features, EncoderCache* cache) {
  if (params.layers.empty()) {
    throw ShapeError("encoder has no layers");
  }
  if (features.cols() != params.layers.front().weight.cols()) {
    throw ShapeError("feature width does not match the first layer");
  }
  Matrix a = features;
  if (cache != nullptr) {
    cache->input = features;
    cache->pre_activations.clear();
    cache->activations.clear();
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Matrix pre = a * layer.weight.transpose();
    pre.rowwise() += layer.bias.row(0);
    if (cache != nullptr) {
      cache->activations.push_back(a);
      cache->pre_activations.push_back(pre);
    }
    if (l + 1 < params.layers.size()) {
      a = silu(pre);
    } else {
      a = std::move(pre);
    }
  }

  Matrix z = a;
  Vector norms(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double n = a.row(i).norm();
    norms(i) = n;
    if (n < kNormFloor) {
      z.row(i).setZero();
      z(i, 0) = 1.0;
    } else {
      z.row(i) /= n;
    }
  }
  if (cache != nullptr) {
    cache->raw_output = std::move(a);
    cache->output_norms = std::move(norms);
  }
  return z;
}

EmbeddingBatch encode(const EncoderParams& params, const PointCloud& cloud, std::span<const std::uint8_t> mask,
                      EncoderCache* cache, bool* substituted) {
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (!params.layers[l].weight.allFinite() || !params.layers[l].bias.allFinite()) {
      throw InvalidArgument("non-finite encoder parameters in layer " + std::to_string(l));
    }
  }
  if (!params.mask_token.allFinite()) {
    throw InvalidArgument("non-finite mask token");
  }
  EmbeddingBatch out;
  out.values = encode_features(params, input_features(cloud, params, mask, substituted), cache);
  out.positions = cloud.positions;
  if (cache != nullptr) {
    cache->mask.assign(mask.begin(), mask.end());
  }
  return out;
}

void encode_backward(const EncoderParams& params, const EncoderCache& cache, const Matrix& grad_embeddings,
                     EncoderParams& grads) {
  const auto& raw = cache.raw_output;
  if (grad_embeddings.rows() != raw.rows() || grad_embeddings.cols() != raw.cols()) {
    throw ShapeError("embedding gradient does not match the cached forward pass");
  }
  // Through the row normalization z = u / |u|.
  Matrix d = Matrix::Zero(raw.rows(), raw.cols());
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    const double n = cache.output_norms(i);
    if (n < kNormFloor) {
      continue;
    }
    const Eigen::RowVectorXd z = raw.row(i) / n;
    d.row(i) = (grad_embeddings.row(i) - z * z.dot(grad_embeddings.row(i))) / n;
  }

  for (std::size_t l = params.layers.size(); l-- > 0;) {
    auto& g = grads.layers[l];
    g.weight.noalias() += d.transpose() * cache.activations[l];
    g.bias.row(0) += d.colwise().sum();
    Matrix d_in = d * params.layers[l].weight;
    if (l > 0) {
      const auto& pre = cache.pre_activations[l - 1];
      d = d_in.cwiseProduct(silu_grad(pre));
    } else if (!cache.mask.empty()) {
      for (Eigen::Index i = 0; i < d_in.rows(); ++i) {
        if (cache.mask[static_cast<std::size_t>(i)] != 0) {
          grads.mask_token.row(0) += d_in.row(i).segment<kMaskedFeatures>(3);
        }
      }
    }
  }
}

LogitsBatch prototype_logits(const PrototypeHead& head, const Matrix& embeddings, double temperature) {
  if (embeddings.cols() != head.dim()) {
    throw ShapeError("embedding dimension does not match the prototype head");
  }
  return LogitsBatch{embeddings * head.projection, temperature};
}

void prototype_logits_backward(const PrototypeHead& head, const Matrix& embeddings, const Matrix& grad_logits,
                               Matrix& grad_embeddings, Matrix& grad_projection) {
  if (grad_logits.rows() != embeddings.rows() || grad_logits.cols() != head.prototypes()) {
    throw ShapeError("logit gradient shape mismatch");
  }
  grad_embeddings.noalias() += grad_logits * head.projection.transpose();
  grad_projection.noalias() += embeddings.transpose() * grad_logits;
}

void ema_update(TeacherState& teacher, const ModelParams& student, double m) {
  if (!(m >= 0.0 && m <= 1.0)) {
    throw InvalidArgument("EMA momentum must lie in [0, 1]");
  }
  if (!same_shapes(teacher.params, student)) {
    throw ShapeError("teacher and student differ in shape");
  }
  check_finite(student);
  std::vector<const Matrix*> src;
  for_each_tensor(student, [&](const std::string&, const Matrix& t) { src.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(teacher.params, [&](const std::string&, Matrix& t) {
    t = m * t + (1.0 - m) * *src[i++];
  });
  teacher.momentum = m;
  teacher.params.head.normalize_columns();
}

}  // namespace lam3c
