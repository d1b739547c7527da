#include "lam3c/losses.hpp"

#include "lam3c/kdtree.hpp"

#include <cmath>

namespace lam3c {

void LossConfig::check() const {
  if (w_unmask < 0.0 || w_mask < 0.0 || w_roll < 0.0) {
    throw ConfigError("clustering weights must be non-negative");
  }
  if (lambda < 0.0 || mu < 0.0) {
    throw ConfigError("lambda and mu must be non-negative");
  }
  if (!(huber_delta > 0.0)) {
    throw ConfigError("huber_delta must be positive");
  }
}

LossResult clustering_ce(const AssignmentMatrix& q_teacher, const LogitsBatch& student_logits) {
  const Matrix& q = q_teacher.values;
  if (q.rows() != student_logits.rows() || q.cols() != student_logits.cols()) {
    throw ShapeError("teacher assignment and student logits differ in shape");
  }
  LossResult out;
  out.gradient = Matrix::Zero(q.rows(), q.cols());
  if (q.rows() == 0) {
    out.empty = true;
    return out;
  }
  const auto rows = static_cast<double>(q.rows());
  const Matrix log_p = log_softmax_rows(student_logits);
  const Matrix p = log_p.array().exp().matrix();
  const double scale = 1.0 / (rows * student_logits.temperature);
  double total = 0.0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double row = 0.0;
    double mass = 0.0;
    for (Eigen::Index k = 0; k < q.cols(); ++k) {
      row += q(i, k) * log_p(i, k);
      mass += q(i, k);
    }
    total -= row;
    out.gradient.row(i) = (mass * p.row(i) - q.row(i)) * scale;
  }
  out.value = total / rows;
  return out;
}

double huber(double r, double delta) { return r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta); }

LossResult laplacian_loss(const Matrix& z, const KnnGraph& graph, const LossConfig& config) {
  if (graph.node_count != static_cast<std::size_t>(z.rows())) {
    throw ShapeError("graph and embeddings disagree on the number of points");
  }
  LossResult out;
  out.gradient = Matrix::Zero(z.rows(), z.cols());
  if (graph.edges.empty()) {
    out.empty = true;
    return out;
  }

  if (config.laplacian_form == LaplacianForm::pairwise) {
    const double inv_e = 1.0 / static_cast<double>(graph.edges.size());
    double total = 0.0;
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const auto i = graph.edges[e].source;
      const auto j = graph.edges[e].target;
      const double w = graph.weights[e];
      const Eigen::RowVectorXd diff = z.row(i) - z.row(j);
      total += w * diff.squaredNorm();
      const Eigen::RowVectorXd g = (2.0 * w * inv_e) * diff;
      out.gradient.row(i) += g;
      out.gradient.row(j) -= g;
    }
    out.value = total * inv_e;
    return out;
  }

  // Huber on the residual against the weighted neighbor mean. Edges are grouped by source.
  const double inv_n = 1.0 / static_cast<double>(z.rows());
  const double delta = config.huber_delta;
  double total = 0.0;
  std::size_t e = 0;
  while (e < graph.edges.size()) {
    const auto i = graph.edges[e].source;
    std::size_t end = e;
    double wsum = 0.0;
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(z.cols());
    while (end < graph.edges.size() && graph.edges[end].source == i) {
      wsum += graph.weights[end];
      mean += graph.weights[end] * z.row(graph.edges[end].target);
      ++end;
    }
    mean /= wsum;
    const Eigen::RowVectorXd r = z.row(i) - mean;
    const double rn = r.norm();
    total += huber(rn, delta);
    Eigen::RowVectorXd g;
    if (rn <= delta) {
      g = r * inv_n;
    } else {
      g = r * (delta / rn * inv_n);
    }
    out.gradient.row(i) += g;
    for (std::size_t f = e; f < end; ++f) {
      out.gradient.row(graph.edges[f].target) -= (graph.weights[f] / wsum) * g;
    }
    e = end;
  }
  out.value = total * inv_n;
  return out;
}

LossResult laplacian_loss(const EmbeddingBatch& embeddings, const KnnGraph& graph, const LossConfig& config) {
  if (!embeddings.positions.empty() && embeddings.positions.size() != static_cast<std::size_t>(embeddings.size())) {
    throw ShapeError("embedding batch positions and values differ in length");
  }
  return laplacian_loss(embeddings.values, graph, config);
}

LossResult consistency_loss(const Matrix& teacher, const Matrix& student, const CorrespondenceSet& pairs) {
  if (teacher.cols() != student.cols()) {
    throw ShapeError("teacher and student embedding dimensions differ");
  }
  LossResult out;
  out.gradient = Matrix::Zero(student.rows(), student.cols());
  if (pairs.pairs.empty()) {
    out.empty = true;
    return out;
  }
  const double inv_p = 1.0 / static_cast<double>(pairs.pairs.size());
  double total = 0.0;
  for (const auto& [i, j] : pairs.pairs) {
    if (i >= student.rows() || j >= teacher.rows()) {
      throw ShapeError("correspondence index out of range");
    }
    const Eigen::RowVectorXd diff = student.row(i) - teacher.row(j);
    total += diff.squaredNorm();
    out.gradient.row(i) += (2.0 * inv_p) * diff;
  }
  out.value = total * inv_p;
  return out;
}

LossResult consistency_loss(const EmbeddingBatch& teacher, const EmbeddingBatch& student,
                            const CorrespondenceSet& pairs) {
  return consistency_loss(teacher.values, student.values, pairs);
}

CorrespondenceSet match_correspondences(std::span<const Vec3> teacher_positions,
                                        std::span<const Vec3> student_positions, double cutoff) {
  CorrespondenceSet out;
  if (teacher_positions.empty() || student_positions.empty()) {
    out.empty_input = true;
    out.dropped = student_positions.size();
    return out;
  }
  const KdTree tree(teacher_positions);
  const double cutoff_sq = cutoff * cutoff;
  out.pairs.reserve(student_positions.size());
  for (std::size_t i = 0; i < student_positions.size(); ++i) {
    const auto nb = tree.nearest(student_positions[i]);
    if (nb && nb->squared_distance <= cutoff_sq) {
      out.pairs.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(nb->index));
    } else {
      ++out.dropped;
    }
  }
  return out;
}

LossWeights effective_weights(const LossConfig& config, std::int64_t step, const Schedule& lambda_schedule) {
  return LossWeights{config.w_unmask, config.w_mask, config.w_roll, schedule_value(lambda_schedule, step),
                     config.mu};
}

LossBreakdown total_loss(const LossComponents& parts, const LossConfig& config, std::int64_t step,
                         const Schedule& lambda_schedule) {
  LossBreakdown out;
  out.weights = effective_weights(config, step, lambda_schedule);
  const auto& w = out.weights;
  out.unmask = parts.unmask;
  out.mask = parts.mask;
  out.roll = parts.roll;
  out.laplacian = parts.laplacian;
  out.consistency = parts.consistency;
  out.clustering = w.unmask * parts.unmask + w.mask * parts.mask + w.roll * parts.roll;
  out.total = out.clustering + w.lambda * parts.laplacian + w.mu * parts.consistency;

  auto accumulate = [&](const std::optional<Matrix>& g, double weight) {
    if (!g) {
      return;
    }
    if (!out.gradient) {
      out.gradient = Matrix::Zero(g->rows(), g->cols());
    } else if (out.gradient->rows() != g->rows() || out.gradient->cols() != g->cols()) {
      throw ShapeError("component gradients differ in shape");
    }
    *out.gradient += weight * *g;
  };
  accumulate(parts.grad_unmask, w.unmask);
  accumulate(parts.grad_mask, w.mask);
  accumulate(parts.grad_roll, w.roll);
  accumulate(parts.grad_laplacian, w.lambda);
  accumulate(parts.grad_consistency, w.mu);
  return out;
}

}  // namespace lam3c
