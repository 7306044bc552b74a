#include "tmdc/tensor/layers.hpp"

#include <cmath>

#include "tmdc/tensor/ops.hpp"

namespace tmdc {

Linear Linear::gaussian(std::size_t in, std::size_t out, RngStream& rng) {
  Tensor w = randn(rng, Shape{out, in});
  const double std_dev = std::sqrt(1.0 / static_cast<double>(in));
  for (double& v : w.mutable_values()) v *= std_dev;
  return Linear{w, Tensor::zeros(Shape{out}), std::nullopt};
}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  return Linear{Tensor::zeros(Shape{out, in}), Tensor::zeros(Shape{out}), std::nullopt};
}

Tensor Linear::effective_weight() const {
  if (!lora) return weight;
  return ops::add(weight, ops::scale(ops::matmul(lora->a, lora->b), lora->scale()));
}

Tensor Linear::forward(const Tensor& x) const { return ops::affine(x, effective_weight(), bias); }

Linear Linear::clone() const {
  Linear out{weight.clone(), bias.clone(), std::nullopt};
  if (lora) out.lora = LoraAdapter{lora->a.clone(), lora->b.clone(), lora->alpha};
  return out;
}

}  // namespace tmdc
