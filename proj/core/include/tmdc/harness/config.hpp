#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tmdc/attacks/attacks.hpp"
#include "tmdc/baseline/baseline.hpp"
#include "tmdc/classifier/classifier.hpp"
#include "tmdc/harness/datagen.hpp"
#include "tmdc/tm/tm_trainer.hpp"

namespace tmdc {

/// Invalid or unreadable configuration (CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct DiffusionSpec {
  std::size_t timesteps = 100;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::size_t hidden = 128;
  std::size_t time_dim = 32;
  std::size_t class_dim = 16;
  TrainConfig train;
};

struct NamedAttack {
  std::string name;
  AttackConfig attack;
};

struct AdvTrainSpec {
  BaselineTrainConfig train;
  AttackConfig attack;  // kind must be pgd
};

struct TmSpec {
  TmRunConfig run;
  /// Attack (by name) used to perturb the train and validation splits.
  std::string attack = "pgd";
};

inline const std::vector<std::string> kStageOrder = {"gen",  "train_diffusion", "train_baseline", "adv_train_baseline",
                                                     "attack", "eval",          "tm",             "select",
                                                     "report"};

struct ExperimentConfig {
  std::filesystem::path output_dir = "runs/default";
  std::uint64_t seed = 0;
  std::vector<std::string> stages = kStageOrder;
  BlobSpec dataset;
  DiffusionSpec diffusion;
  std::size_t baseline_hidden = 128;
  BaselineTrainConfig baseline;
  AdvTrainSpec adv_training;
  std::vector<NamedAttack> attacks;
  EvalConfig eval;
  TmSpec tm;

  bool has_stage(std::string_view stage) const;
  const NamedAttack& attack(std::string_view name) const;
  /// Cross-field checks; throws ConfigError.
  void validate() const;
};

/// Desk defaults: fgsm, pgd (eps 0.05, 40 iters) and pgd_restarts attacks.
ExperimentConfig default_config();

/// Strict parse: unknown keys and wrong types raise ConfigError naming the path.
ExperimentConfig config_from_json(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Full echo of every field; config_from_json(config_to_json(c)) == c field for field.
std::string config_to_json(const ExperimentConfig& config);

/// Deterministic per-component seed derived from the experiment seed.
std::uint64_t component_seed(const ExperimentConfig& config, std::string_view component);

/// Canned stage selections: table1, table2, autoattack, ablations.
ExperimentConfig apply_recipe(ExperimentConfig config, std::string_view recipe);

}  // namespace tmdc
