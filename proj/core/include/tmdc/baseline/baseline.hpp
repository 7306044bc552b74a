#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "tmdc/attacks/attacks.hpp"
#include "tmdc/diffusion/dataset.hpp"
#include "tmdc/tensor/checkpoint.hpp"
#include "tmdc/tensor/layers.hpp"

namespace tmdc {

/// MLP d -> hidden -> hidden -> C with SiLU activations.
class DiscriminativeModel {
 public:
  DiscriminativeModel(std::size_t dim, std::size_t num_classes, std::uint64_t seed, std::size_t hidden = 128);

  std::size_t dim() const { return layers_.front().in_features(); }
  std::size_t num_classes() const { return layers_.back().out_features(); }

  /// x:[B, d] -> logits [B, C].
  Tensor logits(const Tensor& x) const;

  std::vector<Tensor> parameters() const;
  void set_trainable(bool flag);
  std::vector<NamedTensor> state() const;
  static DiscriminativeModel from_state(std::span<const NamedTensor> state);
  DiscriminativeModel clone() const;

 private:
  DiscriminativeModel() = default;
  std::vector<Linear> layers_;
};

std::vector<double> softmax(std::span<const double> logits);

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;
};

/// Argmax label (first on ties) and softmax probabilities for one sample.
Prediction predict(const DiscriminativeModel& model, std::span<const double> x);
std::vector<int> predict_labels(const DiscriminativeModel& model, const Tensor& x);
double accuracy(const DiscriminativeModel& model, const LabeledDataset& data);
double accuracy(const DiscriminativeModel& model, const Tensor& x, std::span<const int> labels);

/// Per-row cross-entropy and its input gradient, for attacks.
LossGradFn cross_entropy_gradient(const DiscriminativeModel& model);

struct BaselineTrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
};

struct TrainCurves {
  std::vector<double> loss;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
};

/// Adam on mean cross-entropy. Throws NumericError naming the step on a non-finite loss.
TrainCurves train_discriminative(DiscriminativeModel& model, const LabeledDataset& train,
                                 const BaselineTrainConfig& config, const LabeledDataset* test = nullptr);

/// Called with each clean batch and the perturbed batch that replaces it.
using AdvBatchHook = std::function<void(std::size_t step, const Tensor& clean, const Tensor& perturbed)>;

/// Madry loop: every batch is replaced by PGD against the current model before the update.
TrainCurves adversarial_train(DiscriminativeModel& model, const LabeledDataset& train, const AttackConfig& attack,
                              const BaselineTrainConfig& config, const LabeledDataset* test = nullptr,
                              const AdvBatchHook& hook = {});

}  // namespace tmdc
