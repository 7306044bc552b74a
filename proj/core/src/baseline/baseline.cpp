#include "tmdc/baseline/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tmdc/tensor/ops.hpp"
#include "tmdc/tensor/optim.hpp"
#include "tmdc/tensor/rng.hpp"
#include "tmdc/tensor/tape.hpp"

namespace tmdc {

namespace {

std::string layer_key(std::size_t i, const char* field) {
  return "baseline.layer" + std::to_string(i) + "." + field;
}

}  // namespace

DiscriminativeModel::DiscriminativeModel(std::size_t dim, std::size_t num_classes, std::uint64_t seed,
                                         std::size_t hidden) {
  if (dim == 0 || num_classes == 0 || hidden == 0) throw Error("baseline: dimensions must be positive");
  RngStream rng(seed, derive_stream("baseline.init"));
  layers_.push_back(Linear::gaussian(dim, hidden, rng));
  layers_.push_back(Linear::gaussian(hidden, hidden, rng));
  layers_.push_back(Linear::gaussian(hidden, num_classes, rng));
  set_trainable(true);
}

Tensor DiscriminativeModel::logits(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != dim()) {
    throw ShapeError("baseline: expected input [B, " + std::to_string(dim()) + "], got " + shape_str(x.shape()));
  }
  Tensor h = ops::silu(layers_[0].forward(x));
  h = ops::silu(layers_[1].forward(h));
  return layers_[2].forward(h);
}

std::vector<Tensor> DiscriminativeModel::parameters() const {
  std::vector<Tensor> out;
  for (const auto& l : layers_) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

void DiscriminativeModel::set_trainable(bool flag) {
  for (auto& p : parameters()) p.set_requires_grad(flag);
}

std::vector<NamedTensor> DiscriminativeModel::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    out.push_back({layer_key(i, "weight"), layers_[i].weight});
    out.push_back({layer_key(i, "bias"), layers_[i].bias});
  }
  return out;
}

DiscriminativeModel DiscriminativeModel::from_state(std::span<const NamedTensor> state) {
  DiscriminativeModel m;
  for (std::size_t i = 0; i < 3; ++i) {
    m.layers_.push_back(Linear{find_tensor(state, layer_key(i, "weight")).clone(),
                               find_tensor(state, layer_key(i, "bias")).clone(), std::nullopt});
  }
  for (std::size_t i = 1; i < 3; ++i) {
    if (m.layers_[i].in_features() != m.layers_[i - 1].out_features()) {
      throw Error("baseline checkpoint: layer " + std::to_string(i) + " does not chain with the previous layer");
    }
  }
  m.set_trainable(true);
  return m;
}

DiscriminativeModel DiscriminativeModel::clone() const {
  DiscriminativeModel m;
  for (const auto& l : layers_) m.layers_.push_back(l.clone());
  return m;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw Error("softmax: empty input");
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - hi);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

namespace {

int argmax_first(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<int>(best);
}

}  // namespace

Prediction predict(const DiscriminativeModel& model, std::span<const double> x) {
  NoGradScope no_grad;
  const Tensor out = model.logits(Tensor(Shape{1, x.size()}, std::vector<double>(x.begin(), x.end())));
  return Prediction{argmax_first(out.values()), softmax(out.values())};
}

std::vector<int> predict_labels(const DiscriminativeModel& model, const Tensor& x) {
  NoGradScope no_grad;
  const Tensor out = model.logits(x);
  const std::size_t c = out.cols();
  std::vector<int> labels(out.rows());
  for (std::size_t r = 0; r < labels.size(); ++r) labels[r] = argmax_first(out.values().subspan(r * c, c));
  return labels;
}

double accuracy(const DiscriminativeModel& model, const Tensor& x, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  const auto pred = predict_labels(model, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double accuracy(const DiscriminativeModel& model, const LabeledDataset& data) {
  return accuracy(model, data.batch(0, data.size()), data.labels);
}

LossGradFn cross_entropy_gradient(const DiscriminativeModel& model) {
  return [&model](const Tensor& x, std::span<const int> y) {
    Tape tape;
    TapeScope scope(tape);
    Tensor input = x.detach();
    input.set_requires_grad(true);
    const Tensor logits = model.logits(input);
    const std::size_t rows = logits.rows(), c = logits.cols();
    // Summed (not mean) loss so each row's gradient is its own loss gradient.
    const Tensor loss = ops::scale(ops::cross_entropy(logits, y), static_cast<double>(rows));
    tape.backward(loss);

    LossGrad out;
    out.grad = Tensor(input.shape(), std::vector<double>(input.grad().begin(), input.grad().end()));
    out.loss.resize(rows);
    out.predicted.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = logits.values().subspan(r * c, c);
      const double hi = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (double v : row) z += std::exp(v - hi);
      out.loss[r] = hi + std::log(z) - row[static_cast<std::size_t>(y[r])];
      out.predicted[r] = argmax_first(row);
    }
    for (auto& p : model.parameters()) p.zero_grad();
    return out;
  };
}

namespace {

TrainCurves train_loop(DiscriminativeModel& model, const LabeledDataset& train, const BaselineTrainConfig& config,
                       const LabeledDataset* test, const char* name,
                       const std::function<Tensor(std::size_t, const Tensor&, std::span<const int>, RngStream&)>& perturb) {
  if (train.size() == 0) throw Error(std::string(name) + ": dataset is empty");
  if (train.dim != model.dim()) throw ShapeError(std::string(name) + ": dataset dimension differs from model");
  if (config.batch_size == 0) throw Error(std::string(name) + ": batch size must be positive");
  model.set_trainable(true);
  Adam optimizer(model.parameters());
  TrainCurves curves;
  curves.loss.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    RngStream rng(config.seed, derive_stream(name, step));
    std::vector<std::size_t> idx(config.batch_size);
    for (auto& i : idx) i = rng.below(train.size());
    Tensor x = train.gather(idx);
    const std::vector<int> y = train.gather_labels(idx);
    if (perturb) x = perturb(step, x, y, rng);

    double value = 0.0;
    try {
      Tape tape;
      TapeScope scope(tape);
      optimizer.zero_grad();
      const Tensor loss = ops::cross_entropy(model.logits(x), y);
      value = loss.item();
      if (!std::isfinite(value)) throw NumericError("loss is not finite");
      tape.backward(loss);
      optimizer.check_finite_grads();
    } catch (const NumericError& e) {
      throw NumericError(std::string(name) + ": step " + std::to_string(step) + ": " + e.what());
    }
    optimizer.step(config.learning_rate);
    curves.loss.push_back(value);
  }
  optimizer.zero_grad();
  curves.train_accuracy = accuracy(model, train);
  if (test != nullptr) curves.test_accuracy = accuracy(model, *test);
  return curves;
}

}  // namespace

TrainCurves train_discriminative(DiscriminativeModel& model, const LabeledDataset& train,
                                 const BaselineTrainConfig& config, const LabeledDataset* test) {
  return train_loop(model, train, config, test, "train_discriminative", {});
}

TrainCurves adversarial_train(DiscriminativeModel& model, const LabeledDataset& train, const AttackConfig& attack,
                              const BaselineTrainConfig& config, const LabeledDataset* test,
                              const AdvBatchHook& hook) {
  if (attack.kind != AttackKind::Pgd) throw Error("adversarial_train: attack kind must be pgd");
  attack.validate();
  const LossGradFn grad = cross_entropy_gradient(model);
  auto perturb = [&](std::size_t step, const Tensor& x, std::span<const int> y, RngStream& rng) {
    Tensor adv = pgd(grad, x, y, attack, rng);
    if (hook) hook(step, x, adv);
    return adv;
  };
  return train_loop(model, train, config, test, "adversarial_train", perturb);
}

}  // namespace tmdc
