#pragma once

#include <filesystem>
#include <string>

#include "tmdc/attacks/attacks.hpp"
#include "tmdc/baseline/baseline.hpp"
#include "tmdc/classifier/classifier.hpp"
#include "tmdc/diffusion/dataset.hpp"
#include "tmdc/diffusion/denoiser.hpp"
#include "tmdc/diffusion/schedule.hpp"

namespace tmdc {

struct AdvProvenance {
  AttackConfig attack;
  std::string surrogate_hash;  // SHA-256 of the surrogate checkpoint, or empty
  std::string source_split;
};

/// Perturbed samples aligned index-for-index with their source dataset.
struct AdvDataset {
  LabeledDataset data;
  AdvProvenance provenance;
};

/// Attacks every sample against the surrogate's cross-entropy (fgsm, pgd or
/// pgd_restarts), in fixed-size batches with per-batch RNG streams.
AdvDataset gen_adv_dataset(const DiscriminativeModel& surrogate, const LabeledDataset& source,
                           const AttackConfig& config, std::string surrogate_hash = {});

/// Throws Error if the sets are misaligned, a label changed, or any sample leaves
/// its epsilon ball (by more than 1e-9) or the data bounds.
void check_adv_contract(const LabeledDataset& source, const LabeledDataset& perturbed, const AttackConfig& config);

/// PGD on the cross-entropy of softmax(-class_losses(x)) for the true label,
/// with a plan fixed across iterations.
Tensor direct_attack_diffusion(const Denoiser& model, const NoiseSchedule& sched, const McPlan& plan,
                               std::span<const double> x, int y, const AttackConfig& config, RngStream& stream);

/// direct_attack_diffusion over a dataset; each sample's plan uses `k`
/// evenly spaced pairs from a stream keyed by config.seed and the sample.
AdvDataset direct_attack_dataset(const Denoiser& model, const NoiseSchedule& sched, const LabeledDataset& source,
                                 const AttackConfig& config, std::size_t k);

/// CSV in the dataset layout plus a sidecar `<stem>.json` provenance record.
void write_adv_dataset(const std::filesystem::path& csv_path, const AdvDataset& adv);
AdvDataset read_adv_dataset(const std::filesystem::path& csv_path, std::size_t num_classes);
std::filesystem::path provenance_path(const std::filesystem::path& csv_path);

std::string provenance_to_json(const AdvProvenance& p);
AdvProvenance provenance_from_json(std::string_view text);

}  // namespace tmdc
