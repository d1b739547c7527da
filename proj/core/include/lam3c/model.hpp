#pragma once

#include "lam3c/losses.hpp"
#include "lam3c/point_cloud.hpp"
#include "lam3c/sinkhorn.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lam3c {

// xyz + rgb + normal.
inline constexpr int kInputFeatures = 9;
// Features a mask token replaces: rgb + normal. Coordinates stay visible.
inline constexpr int kMaskedFeatures = 6;

struct ModelConfig {
  std::vector<int> hidden = {64, 64};
  int embedding_dim = 32;
  int prototypes = 64;
};

struct DenseLayer {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out
};

// Per-point MLP with SiLU between layers and a unit-norm output.
struct EncoderParams {
  std::vector<DenseLayer> layers;
  Matrix mask_token;  // 1 x kMaskedFeatures
};

struct PrototypeHead {
  Matrix projection;  // D x K, unit columns

  Eigen::Index dim() const { return projection.rows(); }
  Eigen::Index prototypes() const { return projection.cols(); }
  void normalize_columns();
};

struct ModelParams {
  EncoderParams encoder;
  PrototypeHead head;
};

struct TeacherState {
  ModelParams params;
  double momentum = 0.994;
};

// Visits (name, tensor) in a fixed order: layerN.weight, layerN.bias, mask_token, prototypes.
void for_each_tensor(ModelParams& params, const std::function<void(const std::string&, Matrix&)>& fn);
void for_each_tensor(const ModelParams& params, const std::function<void(const std::string&, const Matrix&)>& fn);

ModelParams init_model(const ModelConfig& config, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& params);
bool same_shapes(const ModelParams& a, const ModelParams& b);
double squared_norm(const ModelParams& params);
// Sum of squared differences over all tensors.
double squared_distance(const ModelParams& a, const ModelParams& b);

// N x 9 features; rows flagged in `mask` get the mask token in columns 3..8.
// Missing colors or normals are zero-filled and reported through `substituted`.
Matrix input_features(const PointCloud& cloud, const EncoderParams& params, std::span<const std::uint8_t> mask = {},
                      bool* substituted = nullptr);

// Activations kept for the backward pass.
struct EncoderCache {
  Matrix input;
  std::vector<Matrix> pre_activations;  // one per layer
  std::vector<Matrix> activations;      // input to each layer
  Matrix raw_output;
  Vector output_norms;
  Mask mask;
};

// Rows of `features` through the MLP, then L2 normalization. Outputs with norm
// below 1e-8 become the first basis vector.
Matrix encode_features(const EncoderParams& params, const Matrix& features, EncoderCache* cache = nullptr);

EmbeddingBatch encode(const EncoderParams& params, const PointCloud& cloud, std::span<const std::uint8_t> mask = {},
                      EncoderCache* cache = nullptr, bool* substituted = nullptr);

// Accumulates parameter gradients (including the mask token) into `grads.encoder`.
void encode_backward(const EncoderParams& params, const EncoderCache& cache, const Matrix& grad_embeddings,
                     EncoderParams& grads);

LogitsBatch prototype_logits(const PrototypeHead& head, const Matrix& embeddings, double temperature);

// Given dL/dlogits, accumulates dL/dembeddings and dL/dprojection.
void prototype_logits_backward(const PrototypeHead& head, const Matrix& embeddings, const Matrix& grad_logits,
                               Matrix& grad_embeddings, Matrix& grad_projection);

// teacher <- m * teacher + (1 - m) * student for every tensor, then prototype
// columns re-normalized.
void ema_update(TeacherState& teacher, const ModelParams& student, double m);

}  // namespace lam3c
