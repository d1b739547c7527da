#include "lam3c/sinkhorn.hpp"

#include <cmath>
#include <limits>

namespace lam3c {

void LogitsBatch::check() const {
  if (values.cols() < 2) {
    throw ShapeError("logits need at least 2 prototypes");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InvalidArgument("temperature must be positive");
  }
  if (!values.allFinite()) {
    throw InvalidArgument("logits must be finite");
  }
}

namespace {

// exp(values / tau - rowmax), rows with a -inf max are reported via `bad_row`.
Matrix shifted_exp(const LogitsBatch& logits, Eigen::Index* bad_row) {
  const Matrix scaled = logits.values / logits.temperature;
  Matrix out(scaled.rows(), scaled.cols());
  *bad_row = -1;
  for (Eigen::Index i = 0; i < scaled.rows(); ++i) {
    const double m = scaled.row(i).maxCoeff();
    if (m == -std::numeric_limits<double>::infinity()) {
      *bad_row = i;
      out.row(i).setZero();
      continue;
    }
    out.row(i) = (scaled.row(i).array() - m).exp();
  }
  return out;
}

void normalize_rows(Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < m.cols(); ++k) {
      s += m(i, k);
    }
    m.row(i) /= s;
  }
}

}  // namespace

AssignmentMatrix softmax_rows(const LogitsBatch& logits) {
  Eigen::Index bad = -1;
  AssignmentMatrix out{shifted_exp(logits, &bad)};
  normalize_rows(out.values);
  return out;
}

Matrix log_softmax_rows(const LogitsBatch& logits) {
  const Matrix scaled = logits.values / logits.temperature;
  Matrix out(scaled.rows(), scaled.cols());
  for (Eigen::Index i = 0; i < scaled.rows(); ++i) {
    const double m = scaled.row(i).maxCoeff();
    const double s = (scaled.row(i).array() - m).exp().sum();
    out.row(i) = scaled.row(i).array() - (m + std::log(s));
  }
  return out;
}

AssignmentMatrix sinkhorn_normalize(const LogitsBatch& logits, int iterations, SinkhornTrace* trace) {
  if (logits.rows() < 1 || logits.cols() < 2) {
    throw ShapeError("sinkhorn needs B >= 1 and K >= 2");
  }
  if (iterations < 1) {
    throw InvalidArgument("sinkhorn needs at least one iteration");
  }
  if (!(logits.temperature > 0.0)) {
    throw InvalidArgument("temperature must be positive");
  }
  Eigen::Index bad = -1;
  Matrix m = shifted_exp(logits, &bad);
  if (bad >= 0) {
    throw InvalidArgument("row " + std::to_string(bad) + " has no finite logit; cannot assign");
  }
  if (!m.allFinite()) {
    throw InvalidArgument("logits must be finite or -inf");
  }

  const auto rows = m.rows();
  const auto cols = m.cols();
  if (rows == 1) {
    normalize_rows(m);
    return AssignmentMatrix{std::move(m)};
  }

  const double column_target = static_cast<double>(rows) / static_cast<double>(cols);
  Vector col_sum(cols);
  for (int it = 0; it < iterations; ++it) {
    col_sum.setZero();
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index k = 0; k < cols; ++k) {
        col_sum(k) += m(i, k);
      }
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      // An all-zero column stays zero; it cannot be rescaled to the target.
      if (col_sum(k) > 0.0) {
        m.col(k) *= column_target / col_sum(k);
      }
    }
    if (trace != nullptr) {
      Vector after = Vector::Zero(cols);
      for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index k = 0; k < cols; ++k) {
          after(k) += m(i, k);
        }
      }
      trace->column_sums.push_back(std::move(after));
    }
    normalize_rows(m);
  }
  return AssignmentMatrix{std::move(m)};
}

}  // namespace lam3c
