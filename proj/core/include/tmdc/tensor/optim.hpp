#pragma once

#include <vector>

#include "tmdc/tensor/tensor.hpp"

namespace tmdc {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled (AdamW) weight decay; 0 gives plain Adam.
  double weight_decay = 0.0;
};

/// Adam / AdamW over a fixed parameter list. Parameters are updated in place.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options = {});

  /// Applies one update with the given learning rate using the accumulated grads.
  void step(double learning_rate);
  void zero_grad();

  /// Throws NumericError if any accumulated gradient is non-finite.
  void check_finite_grads() const;

  std::size_t step_count() const { return t_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  AdamOptions options_;
  std::size_t t_ = 0;
};

/// Linear warmup to `base` over `warmup` steps, constant afterwards. `step` is 0-based.
double constant_with_warmup(std::size_t step, double base, std::size_t warmup);

}  // namespace tmdc
