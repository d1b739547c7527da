#pragma once

#include "lam3c/types.hpp"

#include <vector>

namespace lam3c {

// B x K prototype logits and the temperature they are divided by.
struct LogitsBatch {
  Matrix values;
  double temperature = 1.0;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  void check() const;  // finite values, K >= 2, temperature > 0
};

// Non-negative B x K matrix whose rows sum to one.
struct AssignmentMatrix {
  Matrix values;
};

// Row-wise softmax(values / temperature), shifted by the row max.
AssignmentMatrix softmax_rows(const LogitsBatch& logits);
// log of softmax_rows, computed without forming the probabilities first.
Matrix log_softmax_rows(const LogitsBatch& logits);

// Column sums recorded right after each column step.
struct SinkhornTrace {
  std::vector<Vector> column_sums;
};

// Balanced soft assignment. Starting from exp(values / temperature - rowmax),
// each iteration rescales columns to sum B/K and then rows to sum 1, so the
// result is row-stochastic exactly. A single-row batch has no column marginal
// to balance and returns the softmax.
AssignmentMatrix sinkhorn_normalize(const LogitsBatch& logits, int iterations = 3, SinkhornTrace* trace = nullptr);

}  // namespace lam3c
