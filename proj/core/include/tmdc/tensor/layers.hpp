#pragma once

#include <optional>

#include "tmdc/tensor/rng.hpp"
#include "tmdc/tensor/tensor.hpp"

namespace tmdc {

/// Low-rank update W + (alpha / r) * a * b with a:[out, r], b:[r, in].
struct LoraAdapter {
  Tensor a;
  Tensor b;
  double alpha = 1.0;

  std::size_t rank() const { return a.cols(); }
  double scale() const { return alpha / static_cast<double>(rank()); }
};

/// Affine layer y = x W^T + bias with an optional LoRA adapter.
struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
  std::optional<LoraAdapter> lora;

  /// Weight ~ N(0, 1/in), zero bias.
  static Linear gaussian(std::size_t in, std::size_t out, RngStream& rng);
  static Linear zeros(std::size_t in, std::size_t out);

  std::size_t in_features() const { return weight.cols(); }
  std::size_t out_features() const { return weight.rows(); }

  /// W, or W + scale * a * b when an adapter is attached. Differentiable.
  Tensor effective_weight() const;
  Tensor forward(const Tensor& x) const;

  Linear clone() const;
};

}  // namespace tmdc
