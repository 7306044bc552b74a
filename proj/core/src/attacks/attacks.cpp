#include "tmdc/attacks/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tmdc {

namespace {

struct RowView {
  std::size_t rows;
  std::size_t cols;
};

RowView rows_of(const Tensor& t) {
  if (t.rank() == 1) return {1, t.size()};
  if (t.rank() == 2) return {t.rows(), t.cols()};
  throw ShapeError("attack: expected rank 1 or 2, got " + shape_str(t.shape()));
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_grad(const LossGrad& lg, const Tensor& x, const char* where, std::size_t iteration) {
  if (lg.grad.shape() != x.shape()) {
    throw ShapeError(std::string(where) + ": gradient shape " + shape_str(lg.grad.shape()) + " differs from input " +
                     shape_str(x.shape()));
  }
  if (!all_finite(lg.grad.values())) {
    throw NumericError(std::string(where) + ": non-finite gradient at iteration " + std::to_string(iteration));
  }
}

/// Ascent direction per row: sign for l_inf, unit vector for l2.
std::vector<double> direction(const Tensor& grad, Norm norm) {
  const auto [rows, cols] = rows_of(grad);
  const auto g = grad.values();
  std::vector<double> dir(g.size());
  for (std::size_t r = 0; r < rows; ++r) {
    if (norm == Norm::LInf) {
      for (std::size_t j = 0; j < cols; ++j) dir[r * cols + j] = sign(g[r * cols + j]);
    } else {
      double n2 = 0.0;
      for (std::size_t j = 0; j < cols; ++j) n2 += g[r * cols + j] * g[r * cols + j];
      const double n = std::sqrt(n2);
      if (n > 0.0) {
        for (std::size_t j = 0; j < cols; ++j) dir[r * cols + j] = g[r * cols + j] / n;
      }
    }
  }
  return dir;
}

/// clip(x0 + project(candidate - x0)) written into a new tensor.
Tensor constrain(const Tensor& x0, std::span<const double> candidate, const AttackConfig& c) {
  const auto base = x0.values();
  std::vector<double> delta(base.size());
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = candidate[i] - base[i];
  const Tensor projected = project(Tensor(x0.shape(), std::move(delta)), c.norm, c.epsilon);
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(base[i] + projected[i], c.lower, c.upper);
  return Tensor(x0.shape(), std::move(out));
}

Tensor random_start(const Tensor& x, const AttackConfig& c, RngStream& stream) {
  const auto [rows, cols] = rows_of(x);
  std::vector<double> cand(x.values().begin(), x.values().end());
  if (!c.random_start) return Tensor(x.shape(), std::move(cand));
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = cand.data() + r * cols;
    if (c.norm == Norm::LInf) {
      for (std::size_t j = 0; j < cols; ++j) row[j] += stream.uniform(-c.epsilon, c.epsilon);
    } else {
      // Uniform in the l2 ball: Gaussian direction, radius eps * u^(1/d).
      std::vector<double> z(cols);
      double n2 = 0.0;
      for (double& v : z) {
        v = stream.normal();
        n2 += v * v;
      }
      const double radius = c.epsilon * std::pow(stream.uniform(), 1.0 / static_cast<double>(cols));
      const double n = std::sqrt(n2);
      if (n > 0.0) {
        for (std::size_t j = 0; j < cols; ++j) row[j] += radius * z[j] / n;
      }
    }
  }
  return constrain(x, cand, c);
}

Tensor ascend(const Tensor& x0, const Tensor& x, const Tensor& grad, double step, const AttackConfig& c) {
  const auto dir = direction(grad, c.norm);
  const auto xv = x.values();
  std::vector<double> cand(xv.size());
  for (std::size_t i = 0; i < cand.size(); ++i) cand[i] = xv[i] + step * dir[i];
  return constrain(x0, cand, c);
}

}  // namespace

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::Fgsm:
      return "fgsm";
    case AttackKind::Pgd:
      return "pgd";
    case AttackKind::PgdRestarts:
      return "pgd_restarts";
    case AttackKind::DirectDiffusion:
      return "direct_diffusion";
  }
  return "unknown";
}

std::string to_string(Norm norm) { return norm == Norm::LInf ? "l_inf" : "l2"; }

AttackKind parse_attack_kind(std::string_view name) {
  for (auto k : {AttackKind::Fgsm, AttackKind::Pgd, AttackKind::PgdRestarts, AttackKind::DirectDiffusion}) {
    if (to_string(k) == name) return k;
  }
  throw Error("unknown attack kind '" + std::string(name) + "'");
}

Norm parse_norm(std::string_view name) {
  if (name == "l_inf") return Norm::LInf;
  if (name == "l2") return Norm::L2;
  throw Error("unknown norm '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon > 0.0)) throw Error("attack: epsilon must be positive");
  if (kind != AttackKind::Fgsm && iters < 1) throw Error("attack: iters must be at least 1");
  if (step_size < 0.0) throw Error("attack: step_size must be positive (or 0 for epsilon/4)");
  if (kind == AttackKind::PgdRestarts && restarts < 1) throw Error("attack: restarts must be at least 1");
  if (!(lower < upper)) throw Error("attack: lower bound must be below upper bound");
}

Tensor project(const Tensor& delta, Norm norm, double epsilon) {
  if (!(epsilon > 0.0)) throw Error("project: epsilon must be positive");
  const auto [rows, cols] = rows_of(delta);
  std::vector<double> out(delta.values().begin(), delta.values().end());
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * cols;
    if (norm == Norm::LInf) {
      for (std::size_t j = 0; j < cols; ++j) row[j] = std::clamp(row[j], -epsilon, epsilon);
    } else {
      double n2 = 0.0;
      for (std::size_t j = 0; j < cols; ++j) n2 += row[j] * row[j];
      const double n = std::sqrt(n2);
      if (n > epsilon) {
        const double s = epsilon / n;
        for (std::size_t j = 0; j < cols; ++j) row[j] *= s;
      }
    }
  }
  return Tensor(delta.shape(), std::move(out));
}

Tensor fgsm(const LossGradFn& loss_grad, const Tensor& x, std::span<const int> y, double epsilon, double lower,
            double upper) {
  if (!(epsilon > 0.0)) throw Error("fgsm: epsilon must be positive");
  const LossGrad lg = loss_grad(x, y);
  check_grad(lg, x, "fgsm", 0);
  const auto xv = x.values();
  const auto g = lg.grad.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(xv[i] + epsilon * sign(g[i]), lower, upper);
  return Tensor(x.shape(), std::move(out));
}

Tensor pgd(const LossGradFn& loss_grad, const Tensor& x, std::span<const int> y, const AttackConfig& config,
           RngStream& stream) {
  config.validate();
  Tensor cur = random_start(x, config, stream);
  const double step = config.effective_step();
  for (std::size_t it = 0; it < config.iters; ++it) {
    const LossGrad lg = loss_grad(cur, y);
    check_grad(lg, cur, "pgd", it);
    cur = ascend(x, cur, lg.grad, step, config);
  }
  return cur;
}

RestartResult pgd_restarts(const LossGradFn& loss_grad, const Tensor& x, std::span<const int> y,
                           const AttackConfig& config, RngStream& stream) {
  config.validate();
  const auto [rows, cols] = rows_of(x);
  RestartResult res;
  std::vector<double> best(x.values().begin(), x.values().end());
  std::vector<double> best_loss(rows, -std::numeric_limits<double>::infinity());
  res.success.assign(rows, false);
  Tensor cur;

  // Records the losses at `point`; returns the gradient for the next step.
  auto observe = [&](const Tensor& point, std::size_t iteration) {
    LossGrad lg = loss_grad(point, y);
    check_grad(lg, point, "pgd_restarts", iteration);
    if (lg.loss.size() != rows) throw ShapeError("pgd_restarts: need one loss per row");
    const auto pv = point.values();
    for (std::size_t r = 0; r < rows; ++r) {
      if (res.success[r]) continue;
      const bool fooled = config.stop_on_success && !lg.predicted.empty() && lg.predicted[r] != y[r];
      if (lg.loss[r] > best_loss[r] || fooled) {
        best_loss[r] = std::max(best_loss[r], lg.loss[r]);
        std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * cols), cols,
                    best.begin() + static_cast<std::ptrdiff_t>(r * cols));
      }
      if (fooled) res.success[r] = true;
    }
    res.best_loss_trace.push_back(best_loss);
    return lg;
  };

  for (std::size_t restart = 0; restart < config.restarts; ++restart) {
    cur = restart == 0 ? random_start(x, config, stream) : Tensor(x.shape(), best);
    std::vector<double> step(rows, config.effective_step());
    std::vector<std::size_t> stale(rows, 0);
    for (std::size_t it = 0; it < config.iters; ++it) {
      const std::vector<double> before = best_loss;
      const LossGrad lg = observe(cur, it);
      if (config.patience > 0) {
        for (std::size_t r = 0; r < rows; ++r) {
          if (best_loss[r] > before[r]) {
            stale[r] = 0;
          } else if (++stale[r] >= config.patience) {
            step[r] *= 0.5;
            stale[r] = 0;
          }
        }
      }
      // Per-row step sizes: scale the direction row by row before constraining.
      const auto dir = direction(lg.grad, config.norm);
      const auto cv = cur.values();
      std::vector<double> cand(cv.size());
      for (std::size_t r = 0; r < rows; ++r) {
        const bool frozen = res.success[r];
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t i = r * cols + j;
          cand[i] = frozen ? cv[i] : cv[i] + step[r] * dir[i];
        }
      }
      cur = constrain(x, cand, config);
    }
    observe(cur, config.iters);
    if (std::all_of(res.success.begin(), res.success.end(), [](bool s) { return s; })) break;
  }
  res.x_adv = Tensor(x.shape(), std::move(best));
  res.last_iterate = cur;
  return res;
}

Tensor run_attack(const LossGradFn& loss_grad, const Tensor& x, std::span<const int> y, const AttackConfig& config,
                  RngStream& stream) {
  config.validate();
  switch (config.kind) {
    case AttackKind::Fgsm:
      return fgsm(loss_grad, x, y, config.epsilon, config.lower, config.upper);
    case AttackKind::Pgd:
      return pgd(loss_grad, x, y, config, stream);
    case AttackKind::PgdRestarts:
      return pgd_restarts(loss_grad, x, y, config, stream).x_adv;
    case AttackKind::DirectDiffusion:
      break;
  }
  throw Error("run_attack: direct_diffusion needs a diffusion model; use direct_attack_diffusion");
}

double max_perturbation(const Tensor& a, const Tensor& b, Norm norm) {
  if (a.shape() != b.shape()) throw ShapeError("max_perturbation: shapes differ");
  const auto [rows, cols] = rows_of(a);
  double worst = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double d = std::abs(a[r * cols + j] - b[r * cols + j]);
      acc = norm == Norm::LInf ? std::max(acc, d) : acc + d * d;
    }
    worst = std::max(worst, norm == Norm::LInf ? acc : std::sqrt(acc));
  }
  return worst;
}

}  // namespace tmdc
