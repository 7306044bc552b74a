#pragma once

#include <cstddef>
#include <vector>

namespace tmdc {

/// Per-timestep beta, alpha = 1 - beta and alpha_bar = running product of alpha.
struct NoiseSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;

  std::size_t steps() const { return beta.size(); }

  /// Any beta sequence with 0 < beta < 1 and at least one step.
  static NoiseSchedule from_betas(std::vector<double> betas);
};

/// Linear betas from beta_start to beta_end inclusive. Requires T >= 2 and
/// 0 < beta_start <= beta_end < 1.
NoiseSchedule build_schedule(std::size_t steps, double beta_start, double beta_end);

/// Desk-scale default: T = 100, beta from 1e-4 to 0.02.
NoiseSchedule default_schedule();

}  // namespace tmdc
