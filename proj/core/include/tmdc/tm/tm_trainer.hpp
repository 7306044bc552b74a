#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmdc/classifier/classifier.hpp"
#include "tmdc/diffusion/dataset.hpp"
#include "tmdc/diffusion/denoiser.hpp"
#include "tmdc/diffusion/diffusion.hpp"
#include "tmdc/diffusion/schedule.hpp"

namespace tmdc {

/// Raised when fine-tuning changed a weight that must stay frozen.
class FrozenWeightError : public Error {
 public:
  using Error::Error;
};

struct TmRunConfig {
  std::size_t steps = 3000;
  std::size_t batch_size = 32;
  std::size_t timesteps_per_sample = 8;
  double learning_rate = 1e-4;
  std::size_t warmup_steps = 100;
  std::size_t checkpoint_every = 100;
  std::size_t rank = 8;
  double alpha = 16.0;
  double weight_decay = 1e-2;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;

  void validate() const;
};

struct CheckpointRecord {
  std::size_t step = 0;
  std::filesystem::path path;
  std::string sha256;
};

struct TmRunResult {
  std::vector<double> losses;
  std::vector<CheckpointRecord> checkpoints;
  std::string base_hash;
  std::string run_id;
};

/// Truth maximization: LoRA fine-tuning on perturbed inputs conditioned on
/// their true labels. Attaches adapters when the model has none, trains only
/// the adapters with AdamW and constant-with-warmup, and writes
/// ckpt_<step>.tmdc every `checkpoint_every` steps (and at the last step) plus
/// tm_manifest.json into `out_dir`. Throws FrozenWeightError if the base
/// weights hash differently afterwards.
TmRunResult tm_finetune(Denoiser& model, const LabeledDataset& adv_train, const NoiseSchedule& sched,
                        const TmRunConfig& config, const std::filesystem::path& out_dir, const LossLogFn& log = {});

/// ckpt_<step>.tmdc files in the directory, sorted by step.
std::vector<CheckpointRecord> list_checkpoints(const std::filesystem::path& dir);

struct SweepRow {
  std::size_t step = 0;
  double clean_acc = 0.0;  // NaN without a clean validation set
  double robust_acc = 0.0;
};

struct Selection {
  std::size_t best_index = 0;
  std::vector<SweepRow> sweep;
  const SweepRow& best() const { return sweep.at(best_index); }
};

/// Robust validation accuracy per checkpoint; the best is the argmax, earliest on ties.
Selection select_checkpoint(std::span<const CheckpointRecord> checkpoints, const LabeledDataset& robust_val,
                            const NoiseSchedule& sched, const EvalConfig& eval,
                            const LabeledDataset* clean_val = nullptr);

/// CSV `step,clean_acc,robust_acc`.
std::string sweep_csv(const Selection& selection);

}  // namespace tmdc
