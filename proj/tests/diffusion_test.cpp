#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "tmdc/diffusion/dataset.hpp"
#include "tmdc/diffusion/denoiser.hpp"
#include "tmdc/diffusion/diffusion.hpp"
#include "tmdc/diffusion/schedule.hpp"
#include "tmdc/tensor/tape.hpp"

namespace tmdc {
namespace {

DenoiserConfig small_config(std::size_t dim = 4, std::size_t classes = 3, std::size_t steps = 100) {
  return DenoiserConfig{dim, classes, 32, 8, 4, steps};
}

// ---- schedule ----

TEST(Schedule, DefaultEndpointsAndLength) {
  const NoiseSchedule s = default_schedule();
  ASSERT_EQ(s.steps(), 100u);
  EXPECT_DOUBLE_EQ(s.beta.front(), 1e-4);
  EXPECT_DOUBLE_EQ(s.beta.back(), 0.02);
  EXPECT_DOUBLE_EQ(s.alpha_bar[0], 0.9999);
}

TEST(Schedule, AlphaBarMatchesIndependentProduct) {
  const NoiseSchedule s = default_schedule();
  double prod = 1.0;
  for (std::size_t t = 0; t < 100; ++t) {
    const double beta = 1e-4 + (0.02 - 1e-4) * static_cast<double>(t) / 99.0;
    prod *= 1.0 - beta;
    EXPECT_NEAR(s.alpha_bar[t], prod, 1e-14) << "t=" << t;
  }
  EXPECT_NEAR(s.alpha_bar[49], 0.7771800826611795, 1e-12);
  EXPECT_NEAR(s.alpha_bar[99], 0.3635632480554922, 1e-12);
}

TEST(Schedule, AlphaBarStrictlyDecreasingInUnitInterval) {
  const NoiseSchedule s = build_schedule(37, 3e-3, 0.3);
  for (std::size_t t = 0; t < s.steps(); ++t) {
    EXPECT_GT(s.alpha_bar[t], 0.0);
    EXPECT_LT(s.alpha_bar[t], 1.0);
    if (t > 0) {
      EXPECT_LT(s.alpha_bar[t], s.alpha_bar[t - 1]);
    }
  }
}

TEST(Schedule, RejectsInvalidBetas) {
  EXPECT_THROW(build_schedule(0, 1e-4, 0.02), Error);
  EXPECT_THROW(NoiseSchedule::from_betas({0.1, 1.0}), Error);
  EXPECT_THROW(NoiseSchedule::from_betas({0.1, -0.1}), Error);
}

// ---- forward process ----

TEST(ForwardNoise, ClosedFormExample) {
  const NoiseSchedule s = default_schedule();
  const Tensor x0(Shape{1, 2}, {1.0, -2.0});
  const Tensor eps(Shape{1, 2}, {0.5, 0.25});
  const Tensor xt = forward_noise(x0, 99, eps, s);
  const double ab = 0.3635632480554922;
  EXPECT_NEAR(xt[0], std::sqrt(ab) * 1.0 + std::sqrt(1 - ab) * 0.5, 1e-12);
  EXPECT_NEAR(xt[1], std::sqrt(ab) * -2.0 + std::sqrt(1 - ab) * 0.25, 1e-12);
}

TEST(ForwardNoise, PerRowMatchesScalarOverload) {
  const NoiseSchedule s = default_schedule();
  RngStream rng(1, 1);
  const Tensor x0 = randn(rng, Shape{3, 5}), eps = randn(rng, Shape{3, 5});
  const std::vector<int> ts{0, 42, 99};
  const Tensor rows = forward_noise(x0, ts, eps, s);
  for (std::size_t r = 0; r < 3; ++r) {
    const Tensor one = forward_noise(Tensor(Shape{1, 5}, std::vector<double>(x0.row(r).begin(), x0.row(r).end())),
                                     ts[r], Tensor(Shape{1, 5}, std::vector<double>(eps.row(r).begin(), eps.row(r).end())), s);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_DOUBLE_EQ(rows.row(r)[k], one[k]);
  }
}

TEST(ForwardNoise, MonteCarloMoments) {
  const NoiseSchedule s = default_schedule();
  const std::size_t n = 20000;
  const int t = 60;
  const double ab = s.alpha_bar[t];
  RngStream rng(3, 3);
  const Tensor x0 = Tensor::full(Shape{n, 1}, 0.7);
  const Tensor xt = forward_noise(x0, t, randn(rng, Shape{n, 1}), s);
  double mean = 0.0, sq = 0.0;
  for (double v : xt.values()) mean += v;
  mean /= static_cast<double>(n);
  for (double v : xt.values()) sq += (v - mean) * (v - mean);
  const double var = sq / static_cast<double>(n - 1);
  const double se_mean = std::sqrt((1 - ab) / static_cast<double>(n));
  EXPECT_NEAR(mean, std::sqrt(ab) * 0.7, 5 * se_mean);
  EXPECT_NEAR(var, 1 - ab, 5 * (1 - ab) * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST(ForwardNoise, RejectsBadTimestepAndShape) {
  const NoiseSchedule s = default_schedule();
  const Tensor x = Tensor::zeros(Shape{1, 2});
  EXPECT_THROW(forward_noise(x, 100, x, s), Error);
  EXPECT_THROW(forward_noise(x, -1, x, s), Error);
  EXPECT_THROW(forward_noise(x, 0, Tensor::zeros(Shape{1, 3}), s), ShapeError);
}

// ---- denoiser ----

TEST(Denoiser, TimeEmbeddingLayout) {
  const int ts[] = {0, 5};
  const Tensor e = time_embedding(ts, 8);
  ASSERT_EQ(e.shape(), (Shape{2, 8}));
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(e.row(0)[k], 0.0);
    EXPECT_EQ(e.row(0)[4 + k], 1.0);
  }
  EXPECT_DOUBLE_EQ(e.row(1)[0], std::sin(5.0));
  EXPECT_DOUBLE_EQ(e.row(1)[4], std::cos(5.0));
  EXPECT_THROW(time_embedding(ts, 7), Error);
}

TEST(Denoiser, ZeroInitOutputPredictsZero) {
  Denoiser m(small_config(), 1);
  RngStream rng(2, 2);
  const std::vector<int> ts{0, 50}, ys{0, 2};
  const Tensor out = m.predict(randn(rng, Shape{2, 4}), ts, ys);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Denoiser, ZeroInitLossIsMeanSquaredNoise) {
  Denoiser m(small_config(), 1);
  const NoiseSchedule s = default_schedule();
  RngStream rng(2, 3);
  const Tensor x0 = randn(rng, Shape{5, 4}), eps = randn(rng, Shape{5, 4});
  const std::vector<int> ts{0, 10, 20, 30, 99}, ys{0, 1, 2, 0, 1};
  double expect = 0.0;
  for (double v : eps.values()) expect += v * v;
  expect /= 20.0;
  EXPECT_NEAR(diffusion_loss(m, x0, ys, ts, eps, s).item(), expect, 1e-15);
  const Tensor rows = diffusion_loss_rows(m, x0, ys, ts, eps, s);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_NEAR(std::accumulate(rows.values().begin(), rows.values().end(), 0.0) / 5.0, expect, 1e-15);
}

TEST(Denoiser, RejectsOutOfRangeInputs) {
  Denoiser m(small_config(), 1);
  const Tensor x = Tensor::zeros(Shape{1, 4});
  const int t_ok[] = {3}, y_ok[] = {1}, t_bad[] = {100}, y_bad[] = {3};
  EXPECT_THROW(m.predict(x, t_bad, y_ok), Error);
  EXPECT_THROW(m.predict(x, t_ok, y_bad), Error);
  EXPECT_THROW(m.predict(Tensor::zeros(Shape{1, 5}), t_ok, y_ok), ShapeError);
}

TEST(Denoiser, StateRoundTripPredictsIdentically) {
  Denoiser m(small_config(), 9);
  RngStream rng(4, 4);
  for (double& v : m.layers()[2].weight.mutable_values()) v = rng.normal();
  const Denoiser back = Denoiser::from_state(m.state());
  const Tensor x = randn(rng, Shape{3, 4});
  const std::vector<int> ts{1, 2, 3}, ys{0, 1, 2};
  const Tensor a = m.predict(x, ts, ys), b = back.predict(x, ts, ys);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

// ---- training ----

TrainConfig quick_train(std::size_t steps, double lr = 1e-3) {
  TrainConfig c;
  c.steps = steps;
  c.batch_size = 64;
  c.learning_rate = lr;
  c.seed = 5;
  c.log_every = 0;
  return c;
}

TEST(TrainBase, LossDecreases) {
  const auto data = testing::small_blobs(3, 4, 60, 4);
  Denoiser m(small_config(), 3);
  const auto losses = train_base(m, data.train, default_schedule(), quick_train(300, 3e-3));
  ASSERT_EQ(losses.size(), 300u);
  const double head = std::accumulate(losses.begin(), losses.begin() + 30, 0.0) / 30.0;
  const double tail = std::accumulate(losses.end() - 30, losses.end(), 0.0) / 30.0;
  EXPECT_LT(tail, 0.8 * head);
}

TEST(TrainBase, ZeroLearningRateLeavesParametersBitIdentical) {
  const auto data = testing::small_blobs(3, 4, 20, 4);
  Denoiser m(small_config(), 3);
  const auto before = m.state();
  train_base(m, data.train, default_schedule(), quick_train(5, 0.0));
  const auto after = m.state();
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    ASSERT_EQ(before[i].name, after[i].name);
    for (std::size_t k = 0; k < before[i].tensor.size(); ++k) EXPECT_EQ(before[i].tensor[k], after[i].tensor[k]);
  }
}

TEST(TrainBase, DeterministicForFixedSeed) {
  const auto data = testing::small_blobs(3, 4, 20, 4);
  Denoiser a(small_config(), 3), b(small_config(), 3);
  EXPECT_EQ(train_base(a, data.train, default_schedule(), quick_train(20)),
            train_base(b, data.train, default_schedule(), quick_train(20)));
}

TEST(TrainBase, LogsWindowMeans) {
  const auto data = testing::small_blobs(3, 4, 20, 4);
  Denoiser m(small_config(), 3);
  auto cfg = quick_train(10);
  cfg.log_every = 5;
  std::vector<std::pair<std::size_t, double>> logged;
  const auto losses = train_base(m, data.train, default_schedule(), cfg,
                                 [&](std::size_t step, double mean) { logged.emplace_back(step, mean); });
  ASSERT_EQ(logged.size(), 2u);
  EXPECT_EQ(logged[1].first, 10u);
  EXPECT_NEAR(logged[0].second, std::accumulate(losses.begin(), losses.begin() + 5, 0.0) / 5.0, 1e-12);
}

TEST(TrainBase, ClassLabelChangesPredictionAfterTraining) {
  const auto data = testing::small_blobs(3, 4, 40, 4);
  Denoiser m(small_config(), 3);
  train_base(m, data.train, default_schedule(), quick_train(50));
  NoGradScope no_grad;
  const Tensor x = data.test.batch(0, 1);
  const int t[] = {30}, y0[] = {0}, y1[] = {1};
  const Tensor a = m.predict(x, t, y0), b = m.predict(x, t, y1);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
  EXPECT_GT(diff, 1e-6);
}

// ---- reverse process ----

TEST(ReverseChain, SingleStepWithOracleNoiseRecoversInput) {
  const NoiseSchedule s = NoiseSchedule::from_betas({0.3});
  const Tensor x0(Shape{2, 2}, {0.5, -1.0, 2.0, 0.25});
  const Tensor eps(Shape{2, 2}, {1.0, -0.5, 0.3, 0.7});
  const Tensor xT = forward_noise(x0, 0, eps, s);
  RngStream rng(1, 1);
  const std::vector<int> ys{0, 0};
  const Tensor out = reverse_chain([&](const Tensor&, int, std::span<const int>) { return eps; }, s, xT, ys, rng);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out[i], x0[i], 1e-12);
}

TEST(ReverseChain, ZeroPredictorVarianceFollowsRecursion) {
  const NoiseSchedule s = build_schedule(20, 1e-3, 0.1);
  Denoiser m(DenoiserConfig{4, 2, 8, 4, 2, 20}, 1);  // zero output layer
  RngStream rng(8, 8);
  const std::size_t n = 5000;
  const Tensor out = ancestral_sample(m, s, 1, n, rng);
  double v = 1.0;
  for (std::size_t t = s.steps(); t-- > 0;) {
    v /= s.alpha[t];
    if (t > 0) v += s.beta[t];
  }
  double sq = 0.0;
  for (double x : out.values()) sq += x * x;
  const double N = static_cast<double>(out.size());
  EXPECT_NEAR(sq / N, v, 5 * v * std::sqrt(2.0 / N));
}

TEST(ReverseChain, SameStreamSameSamples) {
  const NoiseSchedule s = build_schedule(10, 1e-3, 0.1);
  Denoiser m(DenoiserConfig{3, 2, 8, 4, 2, 10}, 1);
  RngStream a(4, 1), b(4, 1);
  const Tensor x = ancestral_sample(m, s, 0, 6, a), y = ancestral_sample(m, s, 0, 6, b);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i], y[i]);
}

// ---- dataset ----

TEST(Dataset, CsvRoundTripIsExact) {
  LabeledDataset d;
  d.dim = 2;
  d.num_classes = 3;
  d.samples = {0.1, -1.0 / 3.0, 1e-300, 1.0};
  d.labels = {2, 0};
  d.split = "train";
  const LabeledDataset back = dataset_from_csv(dataset_to_csv(d), 3, "train");
  EXPECT_EQ(back.samples, d.samples);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.dim, 2u);
}

TEST(Dataset, RejectsMalformedCsv) {
  EXPECT_THROW(dataset_from_csv("sample_id,label,f0\n0,5,1.0\n", 3, "x"), Error);
  EXPECT_THROW(dataset_from_csv("sample_id,label,f0\n0,1\n", 3, "x"), Error);
  EXPECT_THROW(dataset_from_csv("sample_id,label,f0\n0,1,abc\n", 3, "x"), Error);
  EXPECT_THROW(dataset_from_csv("sample_id,label,f0\n0,1,2.5\n", 3, "x"), Error);
}

TEST(Dataset, BatchAndGather) {
  LabeledDataset d;
  d.dim = 2;
  d.num_classes = 2;
  d.samples = {1, 2, 3, 4, 5, 6};
  d.labels = {0, 1, 0};
  const Tensor b = d.batch(1, 2);
  EXPECT_EQ(b.shape(), (Shape{2, 2}));
  EXPECT_EQ(b[0], 3.0);
  const std::size_t idx[] = {2, 0};
  EXPECT_EQ(d.gather(idx)[0], 5.0);
  EXPECT_EQ(d.gather_labels(idx), (std::vector<int>{0, 0}));
}

}  // namespace
}  // namespace tmdc
