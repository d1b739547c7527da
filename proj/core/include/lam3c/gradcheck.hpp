#pragma once

#include "lam3c/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace lam3c {

struct GradcheckOptions {
  int instances = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Huber instances with a residual norm this close to delta are redrawn.
  double kink_margin = 1e-4;
  std::uint64_t seed = 0;
};

struct GradcheckEntry {
  std::string loss;
  int instances = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double seconds = 0.0;

  bool passed() const;
  std::string to_json() const;
};

// max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf), with the
// numeric gradient from central differences of `f` around `x`.
double gradient_relative_error(const std::function<double(const Matrix&)>& f, const Matrix& x,
                               const Matrix& analytic, double step);

// Central-difference checks of every analytic gradient in the library:
// clustering CE, both Laplacian forms, consistency, prototype logits, encoder.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace lam3c
