#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tmdc/tensor/checkpoint.hpp"
#include "tmdc/tensor/layers.hpp"
#include "tmdc/tensor/tensor.hpp"

namespace tmdc {

struct DenoiserConfig {
  std::size_t dim = 16;
  std::size_t num_classes = 4;
  std::size_t hidden = 128;
  std::size_t time_dim = 32;
  std::size_t class_dim = 16;
  std::size_t timesteps = 100;
};

/// Fixed sinusoidal embedding [sin(t f_k), cos(t f_k)], f_k = 10000^(-k / (dim/2)).
Tensor time_embedding(std::span<const int> timesteps, std::size_t dim);

/// Conditional noise predictor eps_theta(x_t, t, y).
///
/// MLP over concat[x_t, time embedding, class embedding] with two SiLU hidden
/// layers and a zero-initialised output layer, so a fresh model predicts zero
/// noise everywhere. Each affine layer may carry a LoRA adapter.
class Denoiser {
 public:
  Denoiser(DenoiserConfig config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }

  /// x_t:[B, d] with per-row timesteps and labels -> predicted noise [B, d].
  Tensor predict(const Tensor& x_t, std::span<const int> t, std::span<const int> y) const;

  const Tensor& class_embedding() const { return class_embedding_; }
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

  bool has_adapters() const;
  std::vector<Tensor> base_parameters() const;
  std::vector<Tensor> adapter_parameters() const;
  /// Base parameters, flattened in state() order.
  std::vector<NamedTensor> base_state() const;

  /// Sets requires_grad on base and adapter parameters independently.
  void set_trainable(bool base, bool adapters);
  void zero_grad();

  std::vector<NamedTensor> state() const;
  static Denoiser from_state(std::span<const NamedTensor> state);

  Denoiser clone() const;

 private:
  Denoiser() = default;
  DenoiserConfig config_;
  Tensor class_embedding_;
  std::vector<Linear> layers_;
};

}  // namespace tmdc
