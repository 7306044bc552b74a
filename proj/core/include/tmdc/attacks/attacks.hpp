#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tmdc/tensor/rng.hpp"
#include "tmdc/tensor/tensor.hpp"

namespace tmdc {

enum class AttackKind { Fgsm, Pgd, PgdRestarts, DirectDiffusion };
enum class Norm { LInf, L2 };

std::string to_string(AttackKind kind);
std::string to_string(Norm norm);
AttackKind parse_attack_kind(std::string_view name);
Norm parse_norm(std::string_view name);

struct AttackConfig {
  AttackKind kind = AttackKind::Pgd;
  Norm norm = Norm::LInf;
  double epsilon = 0.05;
  std::size_t iters = 40;
  /// 0 selects epsilon / 4.
  double step_size = 0.0;
  std::size_t restarts = 1;
  std::uint64_t seed = 0;
  bool random_start = true;
  /// pgd_restarts: halve the step after this many non-improving iterations; 0 disables halving.
  std::size_t patience = 5;
  /// pgd_restarts: freeze a row once it is misclassified.
  bool stop_on_success = true;
  double lower = -1.0;
  double upper = 1.0;

  double effective_step() const { return step_size > 0.0 ? step_size : epsilon / 4.0; }
  /// Throws Error naming the violated constraint.
  void validate() const;
};

/// Per-row losses, the gradient of their sum w.r.t. x, and (optionally) the
/// model's prediction per row, used to detect successful attacks.
struct LossGrad {
  std::vector<double> loss;
  Tensor grad;
  std::vector<int> predicted;
};

/// Evaluated on x:[B, d] with labels y.
using LossGradFn = std::function<LossGrad(const Tensor& x, std::span<const int> y)>;

/// Row-wise projection onto the epsilon ball: clamp for l_inf, radial rescale
/// for l2 (only when the row norm exceeds epsilon). Rank-1 input is one row.
Tensor project(const Tensor& delta, Norm norm, double epsilon);

/// x + epsilon * sign(grad), clipped to the data bounds; sign(0) = 0.
Tensor fgsm(const LossGradFn& loss_grad, const Tensor& x, std::span<const int> y, double epsilon, double lower = -1.0,
            double upper = 1.0);

/// Projected gradient ascent with an optional uniform random start in the ball.
Tensor pgd(const LossGradFn& loss_grad, const Tensor& x, std::span<const int> y, const AttackConfig& config,
           RngStream& stream);

struct RestartResult {
  Tensor x_adv;          // best point per row (max loss, or first misclassified point)
  Tensor last_iterate;   // final point of the final trajectory
  std::vector<std::vector<double>> best_loss_trace;  // [evaluation][row]
  std::vector<bool> success;
};

/// Multi-restart PGD with step halving ("AutoAttack-lite"). Restart 0 starts
/// like pgd; later restarts start from each row's incumbent best point.
RestartResult pgd_restarts(const LossGradFn& loss_grad, const Tensor& x, std::span<const int> y,
                           const AttackConfig& config, RngStream& stream);

/// Dispatches fgsm, pgd or pgd_restarts by config.kind.
Tensor run_attack(const LossGradFn& loss_grad, const Tensor& x, std::span<const int> y, const AttackConfig& config,
                  RngStream& stream);

/// Largest per-row norm of (a - b).
double max_perturbation(const Tensor& a, const Tensor& b, Norm norm);

}  // namespace tmdc
