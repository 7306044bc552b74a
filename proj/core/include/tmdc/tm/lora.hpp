#pragma once

#include <cstdint>

#include "tmdc/diffusion/denoiser.hpp"

namespace tmdc {

/// Attaches a rank-r adapter (A ~ N(0, 0.01^2), B = 0) to every affine layer
/// of the denoiser, freezes the base parameters and makes only the adapters
/// trainable. Requires 1 <= r < min(in, out) of every layer and no existing adapters.
void attach_lora(Denoiser& model, std::size_t rank, double alpha, std::uint64_t seed);

/// Plain model with W + (alpha / r) A B folded into each weight. Throws if the
/// model carries no adapters (including a model that was already merged).
Denoiser merge_lora(const Denoiser& model);

/// sum over adapters of r * (in + out).
std::size_t adapter_parameter_count(const Denoiser& model);
/// sum over affine layers of in * out.
std::size_t base_weight_count(const Denoiser& model);

}  // namespace tmdc
