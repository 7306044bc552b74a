#include "tmdc/classifier/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "tmdc/diffusion/diffusion.hpp"
#include "tmdc/tensor/ops.hpp"
#include "tmdc/tensor/tape.hpp"

namespace tmdc {

std::string to_string(TimestepStrategy strategy) {
  return strategy == TimestepStrategy::EvenlySpaced ? "evenly-spaced" : "uniform-random";
}

TimestepStrategy parse_strategy(std::string_view name) {
  if (name == "evenly-spaced") return TimestepStrategy::EvenlySpaced;
  if (name == "uniform-random") return TimestepStrategy::UniformRandom;
  throw Error("unknown timestep strategy '" + std::string(name) + "'");
}

McPlan McPlan::slice(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw Error("McPlan::slice: range past the end of the plan");
  const std::size_t d = noise.cols();
  McPlan out;
  out.timesteps.assign(timesteps.begin() + static_cast<std::ptrdiff_t>(first),
                       timesteps.begin() + static_cast<std::ptrdiff_t>(first + count));
  const auto v = noise.values().subspan(first * d, count * d);
  out.noise = Tensor(Shape{count, d}, std::vector<double>(v.begin(), v.end()));
  out.seed = seed;
  out.stream_id = stream_id;
  return out;
}

McPlan make_mc_plan(const NoiseSchedule& sched, std::size_t k, std::size_t dim, TimestepStrategy strategy,
                    RngStream& stream) {
  if (k < 1) throw Error("make_mc_plan: K must be at least 1");
  McPlan plan;
  plan.seed = stream.seed();
  plan.stream_id = stream.stream_id();
  const std::size_t T = sched.steps();
  plan.timesteps.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (strategy == TimestepStrategy::EvenlySpaced) {
      plan.timesteps[i] = static_cast<int>(std::floor((static_cast<double>(i) + 0.5) * static_cast<double>(T) /
                                                      static_cast<double>(k)));
    } else {
      plan.timesteps[i] = static_cast<int>(stream.below(T));
    }
  }
  plan.noise = randn(stream, Shape{k, dim});
  return plan;
}

Tensor class_losses_tensor(const Denoiser& model, const Tensor& x, const McPlan& plan, std::span<const int> labels,
                           const NoiseSchedule& sched) {
  if (labels.empty()) throw Error("class_losses: label set is empty");
  const std::size_t k = plan.size(), n = labels.size();
  if (k == 0) throw Error("class_losses: plan has no pairs");
  const Tensor row = x.rank() == 1 ? ops::reshape(x, Shape{1, x.size()}) : x;
  if (row.rows() != 1) throw ShapeError("class_losses: expected a single sample, got " + shape_str(x.shape()));
  std::vector<int> ts(k * n), ys(k * n);
  for (std::size_t l = 0; l < n; ++l) {
    for (std::size_t i = 0; i < k; ++i) {
      ts[l * k + i] = plan.timesteps[i];
      ys[l * k + i] = labels[l];
    }
  }
  const Tensor per_row = diffusion_loss_rows(model, ops::tile_rows(row, k * n), ys, ts, ops::tile_rows(plan.noise, n),
                                             sched);
  return ops::mean(ops::reshape(per_row, Shape{n, k}), 1);
}

std::vector<double> class_losses(const Denoiser& model, std::span<const double> x, const McPlan& plan,
                                 std::span<const int> labels, const NoiseSchedule& sched) {
  NoGradScope no_grad;
  const Tensor row(Shape{1, x.size()}, std::vector<double>(x.begin(), x.end()));
  const Tensor out = class_losses_tensor(model, row, plan, labels, sched);
  return {out.values().begin(), out.values().end()};
}

std::vector<double> posterior_from_losses(std::span<const double> losses) {
  if (losses.empty()) throw Error("posterior_from_losses: no losses");
  if (!all_finite(losses)) throw NumericError("posterior_from_losses: non-finite loss");
  const double lo = *std::min_element(losses.begin(), losses.end());
  std::vector<double> p(losses.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(-(losses[i] - lo));
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

std::size_t argmin_first(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[best]) best = i;
  }
  return best;
}

namespace {

EvalRow make_row(std::size_t num_classes, std::span<const int> labels, std::span<const double> losses) {
  EvalRow row;
  row.losses.assign(num_classes, std::nullopt);
  row.posterior.assign(num_classes, std::nullopt);
  row.eliminated_at.assign(num_classes, -1);
  const auto post = posterior_from_losses(losses);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    row.losses[static_cast<std::size_t>(labels[i])] = losses[i];
    row.posterior[static_cast<std::size_t>(labels[i])] = post[i];
  }
  row.predicted = labels[argmin_first(losses)];
  return row;
}

}  // namespace

EvalRow classify(const Denoiser& model, std::span<const double> x, const McPlan& plan, const NoiseSchedule& sched) {
  const std::size_t c = model.config().num_classes;
  std::vector<int> labels(c);
  std::iota(labels.begin(), labels.end(), 0);
  return make_row(c, labels, class_losses(model, x, plan, labels, sched));
}

void StagePlan::validate(std::size_t num_classes) const {
  if (stages.empty()) throw Error("stage plan: no stages");
  if (stages.front().num_timesteps == 0) throw Error("stage plan: first stage must evaluate at least one timestep");
  if (stages.back().keep != 1) throw Error("stage plan: final stage must keep exactly 1 label");
  std::size_t surviving = num_classes;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::size_t keep = stages[s].keep;
    if (keep < 1) throw Error("stage plan: stage " + std::to_string(s) + " keeps no labels");
    if (keep > surviving) {
      throw Error("stage plan: stage " + std::to_string(s) + " keeps " + std::to_string(keep) + " of " +
                  std::to_string(surviving) + " labels");
    }
    if (s > 0 && keep >= stages[s - 1].keep) throw Error("stage plan: keep counts must strictly decrease");
    surviving = keep;
  }
}

StagePlan StagePlan::default_for(std::size_t num_classes) {
  if (num_classes == 10) return StagePlan{{{10, 5}, {100, 1}}};
  if (num_classes <= 2) return StagePlan{{{50, 1}}};
  return StagePlan{{{10, (num_classes + 1) / 2}, {100, 1}}};
}

EvalRow classify_staged(const Denoiser& model, std::span<const double> x, const StagePlan& plan,
                        TimestepStrategy strategy, const NoiseSchedule& sched, RngStream& stream) {
  const std::size_t c = model.config().num_classes;
  plan.validate(c);
  std::vector<int> alive(c);
  std::iota(alive.begin(), alive.end(), 0);
  std::vector<double> sum(c, 0.0);
  std::vector<std::size_t> count(c, 0);
  std::vector<int> eliminated(c, -1);
  std::vector<int> entering = alive;

  auto pooled = [&](std::span<const int> labels) {
    std::vector<double> m(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto l = static_cast<std::size_t>(labels[i]);
      m[i] = sum[l] / static_cast<double>(count[l]);
    }
    return m;
  };

  for (std::size_t s = 0; s < plan.stages.size(); ++s) {
    const Stage& stage = plan.stages[s];
    entering = alive;
    if (stage.num_timesteps > 0) {
      const McPlan mc = make_mc_plan(sched, stage.num_timesteps, x.size(), strategy, stream);
      const auto losses = class_losses(model, x, mc, alive, sched);
      for (std::size_t i = 0; i < alive.size(); ++i) {
        const auto l = static_cast<std::size_t>(alive[i]);
        sum[l] += losses[i] * static_cast<double>(mc.size());
        count[l] += mc.size();
      }
    }
    if (stage.keep >= alive.size()) continue;
    const auto means = pooled(alive);
    std::vector<std::size_t> order(alive.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });
    std::vector<int> next;
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (r < stage.keep) {
        next.push_back(alive[order[r]]);
      } else {
        eliminated[static_cast<std::size_t>(alive[order[r]])] = static_cast<int>(s);
      }
    }
    std::sort(next.begin(), next.end());
    alive = std::move(next);
  }

  // Report the labels that entered the last stage; the decision is among them.
  EvalRow row = make_row(c, entering, pooled(entering));
  for (std::size_t l = 0; l < c; ++l) {
    row.eliminated_at[l] = row.losses[l] ? -1 : eliminated[l];
  }
  row.predicted = alive.front();
  return row;
}

RngStream sample_stream(std::uint64_t seed, std::span<const double> x) {
  return RngStream(seed, derive_stream("eval.sample", hash_bytes(x.data(), x.size_bytes())));
}

void summarize(EvalReport& report) {
  const std::size_t c = report.num_classes;
  std::vector<std::size_t> hits(c, 0), totals(c, 0), loss_counts(c, 0);
  std::vector<double> loss_sums(c, 0.0);
  std::size_t correct = 0;
  for (const auto& row : report.rows) {
    const auto y = static_cast<std::size_t>(row.true_label);
    ++totals[y];
    if (row.predicted == row.true_label) {
      ++hits[y];
      ++correct;
    }
    for (std::size_t l = 0; l < c; ++l) {
      if (row.losses[l]) {
        loss_sums[l] += *row.losses[l];
        ++loss_counts[l];
      }
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  report.accuracy = report.rows.empty() ? nan : static_cast<double>(correct) / static_cast<double>(report.rows.size());
  report.per_class_accuracy.assign(c, nan);
  report.mean_losses.assign(c, nan);
  for (std::size_t l = 0; l < c; ++l) {
    if (totals[l] > 0) report.per_class_accuracy[l] = static_cast<double>(hits[l]) / static_cast<double>(totals[l]);
    if (loss_counts[l] > 0) report.mean_losses[l] = loss_sums[l] / static_cast<double>(loss_counts[l]);
  }
}

EvalReport evaluate(const Denoiser& model, const LabeledDataset& data, const NoiseSchedule& sched,
                    const EvalConfig& config) {
  if (data.dim != model.config().dim) throw ShapeError("evaluate: dataset dimension differs from model");
  const std::size_t c = model.config().num_classes;
  StagePlan stages = config.stage_plan;
  if (config.mode == EvalMode::Staged) {
    if (stages.stages.empty()) stages = StagePlan::default_for(c);
    stages.validate(c);
  }

  EvalReport report;
  report.num_classes = c;
  report.config = config;
  report.config.stage_plan = stages;
  report.rows.resize(data.size());

  auto run = [&](std::size_t i) {
    const auto x = data.sample(i);
    RngStream stream = sample_stream(config.seed, x);
    EvalRow row = config.mode == EvalMode::Flat
                      ? classify(model, x, make_mc_plan(sched, config.k, data.dim, config.strategy, stream), sched)
                      : classify_staged(model, x, stages, config.strategy, sched, stream);
    row.sample_id = i;
    row.true_label = data.labels[i];
    report.rows[i] = std::move(row);
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(config.threads, data.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < data.size(); ++i) run(i);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t i = w; i < data.size(); i += workers) run(i);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  summarize(report);
  return report;
}

}  // namespace tmdc
