#include "tmdc/diffusion/schedule.hpp"

#include <string>

#include "tmdc/tensor/tensor.hpp"

namespace tmdc {

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw Error("schedule: need at least one timestep");
  NoiseSchedule s;
  double running = 1.0;
  for (std::size_t t = 0; t < betas.size(); ++t) {
    const double b = betas[t];
    if (!(b > 0.0 && b < 1.0)) throw Error("schedule: beta[" + std::to_string(t) + "] outside (0, 1)");
    running *= 1.0 - b;
    s.alpha.push_back(1.0 - b);
    s.alpha_bar.push_back(running);
  }
  s.beta = std::move(betas);
  return s;
}

NoiseSchedule build_schedule(std::size_t steps, double beta_start, double beta_end) {
  if (steps < 2) throw Error("build_schedule: T must be at least 2");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw Error("build_schedule: require 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(steps);
  const double span = beta_end - beta_start;
  for (std::size_t t = 0; t < steps; ++t) {
    betas[t] = beta_start + span * static_cast<double>(t) / static_cast<double>(steps - 1);
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

NoiseSchedule default_schedule() { return build_schedule(100, 1e-4, 0.02); }

}  // namespace tmdc
