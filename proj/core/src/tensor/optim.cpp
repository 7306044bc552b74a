#include "tmdc/tensor/optim.hpp"

#include <cmath>

namespace tmdc {

Adam::Adam(std::vector<Tensor> params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    if (!p.requires_grad()) throw Error("Adam: every parameter must require grad");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(double learning_rate) {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k].mutable_values();
    auto g = params_[k].grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= learning_rate * options_.weight_decay * w[i];
      w[i] -= learning_rate * mhat / (std::sqrt(vhat) + options_.epsilon);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::check_finite_grads() const {
  for (const auto& p : params_) {
    if (!all_finite(p.grad())) throw NumericError("Adam: non-finite gradient");
  }
}

double constant_with_warmup(std::size_t step, double base, std::size_t warmup) {
  if (warmup == 0 || step + 1 >= warmup) return base;
  return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
}

}  // namespace tmdc
