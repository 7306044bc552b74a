#include "tmdc/tm/lora.hpp"

#include <algorithm>
#include <string>

#include "tmdc/tensor/rng.hpp"
#include "tmdc/tensor/tape.hpp"

namespace tmdc {

void attach_lora(Denoiser& model, std::size_t rank, double alpha, std::uint64_t seed) {
  if (model.has_adapters()) throw Error("attach_lora: model already has adapters");
  if (rank < 1) throw Error("attach_lora: rank must be at least 1");
  for (const auto& layer : model.layers()) {
    const std::size_t limit = std::min(layer.in_features(), layer.out_features());
    if (rank >= limit) {
      throw Error("attach_lora: rank " + std::to_string(rank) + " must be below the smallest layer dimension " +
                  std::to_string(limit));
    }
  }
  RngStream rng(seed, derive_stream("lora.init"));
  for (auto& layer : model.layers()) {
    Tensor a = randn(rng, Shape{layer.out_features(), rank});
    for (double& v : a.mutable_values()) v *= 0.01;
    layer.lora = LoraAdapter{std::move(a), Tensor::zeros(Shape{rank, layer.in_features()}), alpha};
  }
  model.set_trainable(false, true);
}

Denoiser merge_lora(const Denoiser& model) {
  if (!model.has_adapters()) throw Error("merge_lora: model has no adapters to merge");
  NoGradScope no_grad;
  Denoiser merged = model.clone();
  for (auto& layer : merged.layers()) {
    if (!layer.lora) continue;
    const Tensor w = layer.effective_weight();
    layer.weight = Tensor(w.shape(), std::vector<double>(w.values().begin(), w.values().end()));
    layer.lora.reset();
  }
  merged.set_trainable(true, true);
  return merged;
}

std::size_t adapter_parameter_count(const Denoiser& model) {
  std::size_t n = 0;
  for (const auto& layer : model.layers()) {
    if (layer.lora) n += layer.lora->rank() * (layer.in_features() + layer.out_features());
  }
  return n;
}

std::size_t base_weight_count(const Denoiser& model) {
  std::size_t n = 0;
  for (const auto& layer : model.layers()) n += layer.in_features() * layer.out_features();
  return n;
}

}  // namespace tmdc
