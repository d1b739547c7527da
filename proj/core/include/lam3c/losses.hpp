#pragma once

#include "lam3c/knn_graph.hpp"
#include "lam3c/schedule.hpp"
#include "lam3c/sinkhorn.hpp"
#include "lam3c/types.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace lam3c {

// Per-point embeddings z_i (rows) and the coordinates they belong to.
struct EmbeddingBatch {
  Matrix values;
  Positions positions;

  Eigen::Index size() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
};

// (student index, teacher index) pairs; one pair per matched student point.
struct CorrespondenceSet {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  std::size_t dropped = 0;  // student points with no teacher point inside the cutoff
  bool empty_input = false;

  bool empty() const { return pairs.empty(); }
};

enum class LaplacianForm { pairwise, huber_residual };

struct LossConfig {
  double w_unmask = 4.0;
  double w_mask = 2.0;
  double w_roll = 2.0;
  double lambda = 2e-4;  // overridden by the schedule in total_loss
  double mu = 0.05;
  double huber_delta = 0.5;
  LaplacianForm laplacian_form = LaplacianForm::huber_residual;

  void check() const;
};

struct LossResult {
  double value = 0.0;
  Matrix gradient;      // same shape as the differentiated input
  bool empty = false;   // no edges / pairs: value 0 and a zero gradient
};

// Mean over rows of -sum_k q_ik log p_ik with p = softmax(logits / tau).
// Gradient with respect to the raw logits: (p - q) / (B tau). q is constant.
LossResult clustering_ce(const AssignmentMatrix& q_teacher, const LogitsBatch& student_logits);

// pairwise:       (1/|E|) sum_E w_ij |z_i - z_j|^2
// huber_residual: (1/N) sum_i Huber_delta(|z_i - sum_j w_ij z_j / sum_j w_ij|)
LossResult laplacian_loss(const Matrix& embeddings, const KnnGraph& graph, const LossConfig& config);
LossResult laplacian_loss(const EmbeddingBatch& embeddings, const KnnGraph& graph, const LossConfig& config);

// Quadratic 0.5 r^2 up to delta, linear delta (r - delta / 2) beyond.
double huber(double r, double delta);

// (1/|P|) sum_P |teacher_j - student_i|^2, differentiated for the student only.
LossResult consistency_loss(const Matrix& teacher, const Matrix& student, const CorrespondenceSet& pairs);
LossResult consistency_loss(const EmbeddingBatch& teacher, const EmbeddingBatch& student,
                            const CorrespondenceSet& pairs);

// Nearest teacher point for every student point, both in the shared frame;
// pairs farther apart than `cutoff` are dropped.
CorrespondenceSet match_correspondences(std::span<const Vec3> teacher_positions,
                                        std::span<const Vec3> student_positions, double cutoff = 0.05);

struct LossComponents {
  double unmask = 0.0;
  double mask = 0.0;
  double roll = 0.0;
  double laplacian = 0.0;
  double consistency = 0.0;
  // Optional gradients of each component with respect to one shared tensor.
  std::optional<Matrix> grad_unmask, grad_mask, grad_roll, grad_laplacian, grad_consistency;
};

struct LossWeights {
  double unmask = 0.0;
  double mask = 0.0;
  double roll = 0.0;
  double lambda = 0.0;
  double mu = 0.0;
};

struct LossBreakdown {
  double unmask = 0.0;
  double mask = 0.0;
  double roll = 0.0;
  double laplacian = 0.0;
  double consistency = 0.0;
  double clustering = 0.0;
  double total = 0.0;
  LossWeights weights;
  std::optional<Matrix> gradient;
};

// Clustering weights from the config, lambda from the schedule at `step`, fixed mu.
LossWeights effective_weights(const LossConfig& config, std::int64_t step, const Schedule& lambda_schedule);

LossBreakdown total_loss(const LossComponents& parts, const LossConfig& config, std::int64_t step,
                         const Schedule& lambda_schedule);

}  // namespace lam3c
