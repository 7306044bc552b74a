#include "tmdc/diffusion/denoiser.hpp"

#include <array>
#include <cmath>
#include <string>

#include "tmdc/tensor/ops.hpp"
#include "tmdc/tensor/rng.hpp"

namespace tmdc {

namespace {

constexpr const char* kPrefix = "denoiser.";

std::string layer_key(std::size_t i, const char* field) {
  return std::string(kPrefix) + "layer" + std::to_string(i) + "." + field;
}

}  // namespace

Tensor time_embedding(std::span<const int> timesteps, std::size_t dim) {
  if (dim % 2 != 0 || dim == 0) throw Error("time_embedding: dimension must be even and positive");
  const std::size_t half = dim / 2;
  std::vector<double> v(timesteps.size() * dim);
  for (std::size_t r = 0; r < timesteps.size(); ++r) {
    const double t = static_cast<double>(timesteps[r]);
    for (std::size_t k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
      v[r * dim + k] = std::sin(t * freq);
      v[r * dim + half + k] = std::cos(t * freq);
    }
  }
  return Tensor(Shape{timesteps.size(), dim}, std::move(v));
}

Denoiser::Denoiser(DenoiserConfig config, std::uint64_t seed) : config_(config) {
  if (config_.dim == 0 || config_.num_classes == 0 || config_.hidden == 0 || config_.timesteps == 0) {
    throw Error("denoiser: dimensions must be positive");
  }
  RngStream rng(seed, derive_stream("denoiser.init"));
  class_embedding_ = randn(rng, Shape{config_.num_classes, config_.class_dim});
  for (double& v : class_embedding_.mutable_values()) v *= 0.1;
  const std::size_t in = config_.dim + config_.time_dim + config_.class_dim;
  layers_.push_back(Linear::gaussian(in, config_.hidden, rng));
  layers_.push_back(Linear::gaussian(config_.hidden, config_.hidden, rng));
  layers_.push_back(Linear::zeros(config_.hidden, config_.dim));
  set_trainable(true, true);
}

Tensor Denoiser::predict(const Tensor& x_t, std::span<const int> t, std::span<const int> y) const {
  if (x_t.rank() != 2 || x_t.cols() != config_.dim) {
    throw ShapeError("denoiser: expected x_t of shape [B, " + std::to_string(config_.dim) + "], got " +
                     shape_str(x_t.shape()));
  }
  const std::size_t rows = x_t.rows();
  if (t.size() != rows || y.size() != rows) throw ShapeError("denoiser: need one timestep and one label per row");
  for (int ti : t) {
    if (ti < 0 || static_cast<std::size_t>(ti) >= config_.timesteps) {
      throw Error("denoiser: timestep " + std::to_string(ti) + " outside [0, " + std::to_string(config_.timesteps) + ")");
    }
  }
  for (int yi : y) {
    if (yi < 0 || static_cast<std::size_t>(yi) >= config_.num_classes) {
      throw Error("denoiser: label " + std::to_string(yi) + " outside [0, " + std::to_string(config_.num_classes) + ")");
    }
  }
  const std::array<Tensor, 3> parts{x_t, time_embedding(t, config_.time_dim), ops::embedding(class_embedding_, y)};
  Tensor h = ops::concat_last(parts);
  h = ops::silu(layers_[0].forward(h));
  h = ops::silu(layers_[1].forward(h));
  return layers_[2].forward(h);
}

bool Denoiser::has_adapters() const {
  for (const auto& l : layers_) {
    if (l.lora) return true;
  }
  return false;
}

std::vector<Tensor> Denoiser::base_parameters() const {
  std::vector<Tensor> out{class_embedding_};
  for (const auto& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::vector<Tensor> Denoiser::adapter_parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) {
    if (l.lora) {
      out.push_back(l.lora->a);
      out.push_back(l.lora->b);
    }
  }
  return out;
}

std::vector<NamedTensor> Denoiser::base_state() const {
  std::vector<NamedTensor> out;
  out.push_back({std::string(kPrefix) + "class_embedding", class_embedding_});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    out.push_back({layer_key(i, "weight"), layers_[i].weight});
    out.push_back({layer_key(i, "bias"), layers_[i].bias});
  }
  return out;
}

void Denoiser::set_trainable(bool base, bool adapters) {
  for (auto& p : base_parameters()) p.set_requires_grad(base);
  for (auto& p : adapter_parameters()) p.set_requires_grad(adapters);
}

void Denoiser::zero_grad() {
  for (auto& p : base_parameters()) p.zero_grad();
  for (auto& p : adapter_parameters()) p.zero_grad();
}

std::vector<NamedTensor> Denoiser::state() const {
  std::vector<NamedTensor> out;
  out.push_back({std::string(kPrefix) + "meta",
                 Tensor(Shape{6}, {static_cast<double>(config_.dim), static_cast<double>(config_.num_classes),
                                   static_cast<double>(config_.hidden), static_cast<double>(config_.time_dim),
                                   static_cast<double>(config_.class_dim), static_cast<double>(config_.timesteps)})});
  for (auto& nt : base_state()) out.push_back(std::move(nt));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (const auto& lora = layers_[i].lora) {
      out.push_back({layer_key(i, "lora_a"), lora->a});
      out.push_back({layer_key(i, "lora_b"), lora->b});
      out.push_back({layer_key(i, "lora_alpha"), Tensor::scalar(lora->alpha)});
    }
  }
  return out;
}

Denoiser Denoiser::from_state(std::span<const NamedTensor> state) {
  const Tensor& meta = find_tensor(state, std::string(kPrefix) + "meta");
  if (meta.size() != 6) throw Error("denoiser checkpoint: malformed meta entry");
  Denoiser d;
  auto as_size = [&](std::size_t i) { return static_cast<std::size_t>(meta[i]); };
  d.config_ = DenoiserConfig{as_size(0), as_size(1), as_size(2), as_size(3), as_size(4), as_size(5)};
  d.class_embedding_ = find_tensor(state, std::string(kPrefix) + "class_embedding").clone();
  for (std::size_t i = 0; i < 3; ++i) {
    Linear l{find_tensor(state, layer_key(i, "weight")).clone(), find_tensor(state, layer_key(i, "bias")).clone(),
             std::nullopt};
    if (has_tensor(state, layer_key(i, "lora_a"))) {
      l.lora = LoraAdapter{find_tensor(state, layer_key(i, "lora_a")).clone(),
                           find_tensor(state, layer_key(i, "lora_b")).clone(),
                           find_tensor(state, layer_key(i, "lora_alpha")).item()};
    }
    d.layers_.push_back(std::move(l));
  }
  const std::size_t in = d.config_.dim + d.config_.time_dim + d.config_.class_dim;
  if (d.class_embedding_.shape() != Shape{d.config_.num_classes, d.config_.class_dim} ||
      d.layers_[0].weight.shape() != Shape{d.config_.hidden, in} ||
      d.layers_[2].weight.shape() != Shape{d.config_.dim, d.config_.hidden}) {
    throw Error("denoiser checkpoint: tensor shapes disagree with meta");
  }
  d.set_trainable(!d.has_adapters(), true);
  return d;
}

Denoiser Denoiser::clone() const {
  Denoiser d;
  d.config_ = config_;
  d.class_embedding_ = class_embedding_.clone();
  for (const auto& l : layers_) d.layers_.push_back(l.clone());
  return d;
}

}  // namespace tmdc
