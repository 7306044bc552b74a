#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmdc/diffusion/dataset.hpp"
#include "tmdc/diffusion/denoiser.hpp"
#include "tmdc/diffusion/schedule.hpp"
#include "tmdc/tensor/rng.hpp"
#include "tmdc/tensor/tensor.hpp"

namespace tmdc {

enum class TimestepStrategy { EvenlySpaced, UniformRandom };

std::string to_string(TimestepStrategy strategy);
TimestepStrategy parse_strategy(std::string_view name);

/// K (t_i, eps_i) pairs shared by every candidate label of one sample.
struct McPlan {
  std::vector<int> timesteps;
  Tensor noise;  // [K, d]
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  std::size_t size() const { return timesteps.size(); }
  /// Pairs [first, first + count) as a plan of their own.
  McPlan slice(std::size_t first, std::size_t count) const;
};

/// Evenly spaced: t_i = floor((i + 0.5) T / K). Uniform: i.i.d. t_i. Noise is
/// drawn after the timesteps from the same stream.
McPlan make_mc_plan(const NoiseSchedule& sched, std::size_t k, std::size_t dim, TimestepStrategy strategy,
                    RngStream& stream);

/// Differentiable per-label mean diffusion loss -> [labels.size()]. x is [d] or [1, d].
Tensor class_losses_tensor(const Denoiser& model, const Tensor& x, const McPlan& plan, std::span<const int> labels,
                           const NoiseSchedule& sched);
std::vector<double> class_losses(const Denoiser& model, std::span<const double> x, const McPlan& plan,
                                 std::span<const int> labels, const NoiseSchedule& sched);

/// softmax(-losses) with a max shift. Throws NumericError on non-finite input.
std::vector<double> posterior_from_losses(std::span<const double> losses);

/// Index of the smallest value; ties go to the smallest index.
std::size_t argmin_first(std::span<const double> values);

/// One evaluated sample. Labels that were eliminated before the final stage
/// have empty loss and posterior entries.
struct EvalRow {
  std::size_t sample_id = 0;
  int true_label = -1;
  int predicted = -1;
  std::vector<std::optional<double>> losses;
  std::vector<std::optional<double>> posterior;
  /// Stage index that eliminated each label; -1 for labels that reached the end.
  std::vector<int> eliminated_at;
};

EvalRow classify(const Denoiser& model, std::span<const double> x, const McPlan& plan, const NoiseSchedule& sched);

struct Stage {
  std::size_t num_timesteps = 0;
  std::size_t keep = 1;
};

struct StagePlan {
  std::vector<Stage> stages;

  /// Throws Error naming the violated rule for `num_classes` labels.
  void validate(std::size_t num_classes) const;
  /// [(10, 5), (100, 1)] for C = 10; otherwise [(10, ceil(C/2)), (100, 1)], or a
  /// single (50, 1) stage when C <= 2.
  static StagePlan default_for(std::size_t num_classes);
};

/// Staged elimination with pooled running means. Each stage draws its own
/// plan of num_timesteps pairs from `stream` with the given strategy; after a
/// stage only the `keep` labels with the lowest pooled mean survive.
EvalRow classify_staged(const Denoiser& model, std::span<const double> x, const StagePlan& plan,
                        TimestepStrategy strategy, const NoiseSchedule& sched, RngStream& stream);

enum class EvalMode { Flat, Staged };

struct EvalConfig {
  EvalMode mode = EvalMode::Flat;
  std::size_t k = 50;
  TimestepStrategy strategy = TimestepStrategy::EvenlySpaced;
  StagePlan stage_plan;  // used when mode == Staged; empty means StagePlan::default_for(C)
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// RNG stream for one sample: keyed by the sample's bytes, so duplicates and
/// reordered datasets see the same draws.
RngStream sample_stream(std::uint64_t seed, std::span<const double> x);

struct EvalReport {
  std::size_t num_classes = 0;
  std::vector<EvalRow> rows;
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // NaN for classes without samples
  std::vector<double> mean_losses;         // over samples where the label was evaluated
  EvalConfig config;
};

EvalReport evaluate(const Denoiser& model, const LabeledDataset& data, const NoiseSchedule& sched,
                    const EvalConfig& config);

/// Fills accuracy, per-class accuracy and mean losses from the rows.
void summarize(EvalReport& report);

}  // namespace tmdc
