#pragma once

#include "lam3c/model.hpp"

namespace lam3c {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Decoupled weight decay, applied to dense-layer weights only.
class AdamW {
 public:
  AdamW(const ModelParams& like, AdamWOptions options = {});

  void step(ModelParams& params, const ModelParams& grads, double learning_rate, double weight_decay);
  std::int64_t steps_taken() const { return t_; }

 private:
  AdamWOptions options_;
  ModelParams first_;
  ModelParams second_;
  std::int64_t t_ = 0;
};

}  // namespace lam3c
