#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tmdc/diffusion/dataset.hpp"
#include "tmdc/diffusion/denoiser.hpp"
#include "tmdc/diffusion/schedule.hpp"
#include "tmdc/tensor/rng.hpp"
#include "tmdc/tensor/tensor.hpp"

namespace tmdc {

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, same t for every element.
Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);
/// Row-wise variant: x0, eps:[B, d], one timestep per row.
Tensor forward_noise(const Tensor& x0, std::span<const int> t, const Tensor& eps, const NoiseSchedule& sched);

/// Per-row squared error mean_j (eps - eps_theta(x_t, t, y))^2 -> [B].
Tensor diffusion_loss_rows(const Denoiser& model, const Tensor& x0, std::span<const int> y, std::span<const int> t,
                           const Tensor& eps, const NoiseSchedule& sched);
/// Mean of diffusion_loss_rows over the batch (a scalar).
Tensor diffusion_loss(const Denoiser& model, const Tensor& x0, std::span<const int> y, std::span<const int> t,
                      const Tensor& eps, const NoiseSchedule& sched);
/// Single-sample form; x0 and eps are [d] or [1, d].
Tensor diffusion_loss(const Denoiser& model, const Tensor& x0, int y, int t, const Tensor& eps,
                      const NoiseSchedule& sched);

struct TrainConfig {
  std::size_t steps = 3000;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
};

using LossLogFn = std::function<void(std::size_t step, double window_mean)>;

/// Adam on diffusion_loss over random (batch, t, eps) draws. Updates `model` in
/// place and returns the per-step loss curve. Throws NumericError naming the
/// step if the loss or a gradient goes non-finite.
std::vector<double> train_base(Denoiser& model, const LabeledDataset& data, const NoiseSchedule& sched,
                               const TrainConfig& config, const LossLogFn& log = {});

/// eps prediction for x_t:[B, d] at a shared timestep t with per-row labels.
using NoisePredictor = std::function<Tensor(const Tensor& x_t, int t, std::span<const int> y)>;

/// DDPM ancestral chain from x_T down to x_0 with sigma_t^2 = beta_t.
Tensor reverse_chain(const NoisePredictor& predict, const NoiseSchedule& sched, Tensor x_T, std::span<const int> y,
                     RngStream& stream);

/// n class-conditional samples starting from x_T ~ N(0, I).
Tensor ancestral_sample(const Denoiser& model, const NoiseSchedule& sched, int y, std::size_t n, RngStream& stream);

}  // namespace tmdc
