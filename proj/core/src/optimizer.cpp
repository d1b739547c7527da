#include "lam3c/optimizer.hpp"

#include <cmath>

namespace lam3c {

AdamW::AdamW(const ModelParams& like, AdamWOptions options)
    : options_(options), first_(zeros_like(like)), second_(zeros_like(like)) {}

void AdamW::step(ModelParams& params, const ModelParams& grads, double learning_rate, double weight_decay) {
  if (!same_shapes(params, grads) || !same_shapes(params, first_)) {
    throw ShapeError("optimizer state, parameters and gradients differ in shape");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));

  std::vector<const Matrix*> g;
  std::vector<Matrix*> m;
  std::vector<Matrix*> v;
  for_each_tensor(grads, [&](const std::string&, const Matrix& t) { g.push_back(&t); });
  for_each_tensor(first_, [&](const std::string&, Matrix& t) { m.push_back(&t); });
  for_each_tensor(second_, [&](const std::string&, Matrix& t) { v.push_back(&t); });

  std::size_t i = 0;
  for_each_tensor(params, [&](const std::string& name, Matrix& p) {
    Matrix& mi = *m[i];
    Matrix& vi = *v[i];
    const Matrix& gi = *g[i];
    mi = options_.beta1 * mi + (1.0 - options_.beta1) * gi;
    vi = options_.beta2 * vi + (1.0 - options_.beta2) * gi.cwiseProduct(gi);
    const bool decay = name.size() > 7 && name.compare(name.size() - 7, 7, ".weight") == 0;
    if (decay) {
      p *= 1.0 - learning_rate * weight_decay;
    }
    p.array() -= learning_rate * (mi.array() / bc1) / ((vi.array() / bc2).sqrt() + options_.epsilon);
    ++i;
  });
  params.head.normalize_columns();
}

}  // namespace lam3c
