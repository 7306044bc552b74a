#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "tmdc/attacks/attacks.hpp"
#include "tmdc/baseline/baseline.hpp"
#include "tmdc/tensor/tape.hpp"

namespace tmdc {
namespace {

BaselineTrainConfig quick(std::size_t steps, double lr = 3e-3) {
  BaselineTrainConfig c;
  c.steps = steps;
  c.batch_size = 32;
  c.learning_rate = lr;
  c.seed = 3;
  c.log_every = 0;
  return c;
}

// Independent per-row cross-entropy from logits.
std::vector<double> oracle_ce(const DiscriminativeModel& m, const Tensor& x, std::span<const int> y) {
  NoGradScope no_grad;
  const Tensor logits = m.logits(x);
  std::vector<double> out;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = logits.row(r);
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    out.push_back(std::log(z) + mx - row[static_cast<std::size_t>(y[r])]);
  }
  return out;
}

TEST(Softmax, KnownValuesAndStability) {
  const double l[] = {0.0, std::log(3.0)};
  const auto p = softmax(l);
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
  const double big[] = {1000.0, 1000.0, -1000.0};
  const auto q = softmax(big);
  EXPECT_DOUBLE_EQ(q[0], 0.5);
  EXPECT_EQ(q[2], 0.0);
  EXPECT_THROW(softmax(std::span<const double>{}), Error);
}

TEST(Baseline, ZeroInputPredictionIsFirstOnTies) {
  DiscriminativeModel m(3, 4, 1, 8);
  for (auto& t : m.parameters()) {
    for (double& v : t.mutable_values()) v = 0.0;
  }
  const double x[] = {0.3, 0.1, -0.2};
  const Prediction p = predict(m, x);
  EXPECT_EQ(p.label, 0);
  for (double v : p.probabilities) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Baseline, CrossEntropyGradientMatchesOracle) {
  DiscriminativeModel m(4, 3, 2, 16);
  RngStream rng(5, 5);
  const Tensor x = randn(rng, Shape{5, 4});
  const std::vector<int> y{0, 2, 1, 1, 0};
  const LossGrad lg = cross_entropy_gradient(m)(x, y);
  const auto losses = oracle_ce(m, x, y);
  ASSERT_EQ(lg.loss.size(), 5u);
  for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(lg.loss[r], losses[r], 1e-12);
  EXPECT_EQ(lg.predicted, predict_labels(m, x));
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor up = x.clone(), down = x.clone();
    up.mutable_values()[i] += h;
    down.mutable_values()[i] -= h;
    const auto lu = oracle_ce(m, up, y), ld = oracle_ce(m, down, y);
    const double numeric = (std::accumulate(lu.begin(), lu.end(), 0.0) - std::accumulate(ld.begin(), ld.end(), 0.0)) /
                           (2 * h);
    EXPECT_NEAR(lg.grad[i], numeric, 1e-7 * (1.0 + std::abs(numeric)));
  }
}

TEST(Baseline, CrossEntropyGradientLeavesParametersUntouched) {
  DiscriminativeModel m(4, 3, 2, 16);
  m.set_trainable(true);
  RngStream rng(5, 6);
  const std::vector<int> y{0, 1};
  cross_entropy_gradient(m)(randn(rng, Shape{2, 4}), y);
  for (const auto& p : m.parameters()) {
    for (double g : p.grad()) EXPECT_EQ(g, 0.0);
  }
}

TEST(Baseline, TrainsToHighAccuracyOnSeparatedBlobs) {
  const auto data = testing::small_blobs(4, 8, 50, 16);
  DiscriminativeModel m(8, 4, 1, 32);
  const TrainCurves c = train_discriminative(m, data.train, quick(300), &data.test);
  EXPECT_EQ(c.loss.size(), 300u);
  EXPECT_GE(c.train_accuracy, 0.95);
  ASSERT_TRUE(c.test_accuracy);
  EXPECT_GE(*c.test_accuracy, 0.9);
  EXPECT_DOUBLE_EQ(*c.test_accuracy, accuracy(m, data.test));
}

TEST(Baseline, ZeroLearningRateKeepsParameters) {
  const auto data = testing::small_blobs(3, 4, 10, 4);
  DiscriminativeModel m(4, 3, 1, 8);
  const auto before = m.state();
  train_discriminative(m, data.train, quick(5, 0.0));
  const auto after = m.state();
  for (std::size_t i = 0; i < before.size(); ++i) {
    for (std::size_t k = 0; k < before[i].tensor.size(); ++k) EXPECT_EQ(before[i].tensor[k], after[i].tensor[k]);
  }
}

TEST(Baseline, StateRoundTrip) {
  DiscriminativeModel m(4, 3, 9, 8);
  const DiscriminativeModel back = DiscriminativeModel::from_state(m.state());
  RngStream rng(1, 1);
  const Tensor x = randn(rng, Shape{3, 4});
  NoGradScope no_grad;
  const Tensor a = m.logits(x), b = back.logits(x);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_THROW(m.logits(Tensor::zeros(Shape{1, 5})), ShapeError);
}

TEST(AdversarialTraining, HookSeesPerturbedBatchesInsideBall) {
  const auto data = testing::small_blobs(3, 4, 20, 4);
  DiscriminativeModel m(4, 3, 1, 16);
  AttackConfig attack;
  attack.epsilon = 0.05;
  attack.iters = 3;
  std::size_t calls = 0;
  adversarial_train(m, data.train, attack, quick(6), nullptr,
                    [&](std::size_t step, const Tensor& clean, const Tensor& perturbed) {
                      EXPECT_EQ(step, calls);
                      ++calls;
                      ASSERT_EQ(clean.shape(), perturbed.shape());
                      EXPECT_LE(max_perturbation(clean, perturbed, Norm::LInf), 0.05 + 1e-12);
                      EXPECT_GT(max_perturbation(clean, perturbed, Norm::LInf), 0.0);
                    });
  EXPECT_EQ(calls, 6u);
}

TEST(AdversarialTraining, RequiresPgd) {
  const auto data = testing::small_blobs(3, 4, 10, 4);
  DiscriminativeModel m(4, 3, 1, 8);
  AttackConfig attack;
  attack.kind = AttackKind::Fgsm;
  EXPECT_THROW(adversarial_train(m, data.train, attack, quick(1)), Error);
}

TEST(AdversarialTraining, ImprovesRobustAccuracyOverCleanTraining) {
  const auto data = testing::small_blobs(3, 8, 60, 20);
  AttackConfig attack;
  attack.epsilon = 0.15;
  attack.iters = 5;
  DiscriminativeModel clean(8, 3, 4, 32), robust(8, 3, 4, 32);
  train_discriminative(clean, data.train, quick(300));
  adversarial_train(robust, data.train, attack, quick(300));
  auto robust_acc = [&](const DiscriminativeModel& m) {
    const Tensor x = data.test.batch(0, data.test.size());
    AttackConfig eval = attack;
    eval.iters = 10;
    RngStream rng(1, 1);
    return accuracy(m, pgd(cross_entropy_gradient(m), x, data.test.labels, eval, rng), data.test.labels);
  };
  EXPECT_GE(robust_acc(robust), robust_acc(clean));
}

}  // namespace
}  // namespace tmdc
