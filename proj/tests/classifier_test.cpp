#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "json.hpp"
#include "test_util.hpp"
#include "tmdc/classifier/classifier.hpp"
#include "tmdc/classifier/report.hpp"
#include "tmdc/diffusion/diffusion.hpp"

namespace tmdc {
namespace {

struct Fixture {
  BlobSplits data;
  Denoiser model;
  NoiseSchedule sched = default_schedule();
};

// One small trained model shared by the tests that need real decisions.
const Fixture& trained() {
  static const Fixture f = [] {
    Fixture out{testing::small_blobs(3, 4, 80, 10), Denoiser(DenoiserConfig{4, 3, 32, 8, 4, 100}, 2)};
    TrainConfig cfg;
    cfg.steps = 400;
    cfg.batch_size = 64;
    cfg.learning_rate = 3e-3;
    cfg.seed = 1;
    cfg.log_every = 0;
    train_base(out.model, out.data.train, out.sched, cfg);
    return out;
  }();
  return f;
}

McPlan concat(const McPlan& a, const McPlan& b) {
  McPlan out;
  out.timesteps = a.timesteps;
  out.timesteps.insert(out.timesteps.end(), b.timesteps.begin(), b.timesteps.end());
  std::vector<double> v(a.noise.values().begin(), a.noise.values().end());
  v.insert(v.end(), b.noise.values().begin(), b.noise.values().end());
  out.noise = Tensor(Shape{out.timesteps.size(), a.noise.cols()}, std::move(v));
  return out;
}

// ---- plans ----

TEST(McPlan, EvenlySpacedTimesteps) {
  RngStream rng(0, 0);
  const McPlan p = make_mc_plan(default_schedule(), 4, 3, TimestepStrategy::EvenlySpaced, rng);
  EXPECT_EQ(p.timesteps, (std::vector<int>{12, 37, 62, 87}));
  EXPECT_EQ(p.noise.shape(), (Shape{4, 3}));
  RngStream rng2(0, 0);
  const McPlan full = make_mc_plan(default_schedule(), 100, 3, TimestepStrategy::EvenlySpaced, rng2);
  for (int t = 0; t < 100; ++t) EXPECT_EQ(full.timesteps[static_cast<std::size_t>(t)], t);
}

TEST(McPlan, UniformRandomFrequencies) {
  const std::size_t k = 200000, T = 10;
  RngStream rng(4, 4);
  const McPlan p = make_mc_plan(build_schedule(T, 1e-3, 0.1), k, 1, TimestepStrategy::UniformRandom, rng);
  std::vector<double> counts(T, 0.0);
  for (int t : p.timesteps) counts[static_cast<std::size_t>(t)] += 1.0;
  const double expect = static_cast<double>(k) / T;
  const double se = std::sqrt(expect * (1.0 - 1.0 / T));
  for (double c : counts) EXPECT_NEAR(c, expect, 5 * se);
}

TEST(McPlan, SameStreamSamePlanAndSliceMatches) {
  RngStream a(9, 3), b(9, 3);
  const McPlan p = make_mc_plan(default_schedule(), 8, 2, TimestepStrategy::UniformRandom, a);
  const McPlan q = make_mc_plan(default_schedule(), 8, 2, TimestepStrategy::UniformRandom, b);
  EXPECT_EQ(p.timesteps, q.timesteps);
  for (std::size_t i = 0; i < p.noise.size(); ++i) EXPECT_EQ(p.noise[i], q.noise[i]);
  const McPlan s = p.slice(3, 2);
  EXPECT_EQ(s.timesteps[1], p.timesteps[4]);
  EXPECT_EQ(s.noise.row(1)[1], p.noise.row(4)[1]);
  EXPECT_THROW(p.slice(7, 2), Error);
  EXPECT_THROW(make_mc_plan(default_schedule(), 0, 2, TimestepStrategy::EvenlySpaced, a), Error);
}

TEST(McPlan, StrategyNames) {
  EXPECT_EQ(parse_strategy(to_string(TimestepStrategy::UniformRandom)), TimestepStrategy::UniformRandom);
  EXPECT_EQ(parse_strategy("evenly-spaced"), TimestepStrategy::EvenlySpaced);
  EXPECT_THROW(parse_strategy("random"), Error);
}

// ---- losses and decisions ----

TEST(ClassLosses, EqualMeanOfSingleSampleLosses) {
  const auto& f = trained();
  RngStream rng(1, 2);
  const McPlan plan = make_mc_plan(f.sched, 7, 4, TimestepStrategy::UniformRandom, rng);
  const auto x = f.data.test.sample(5);
  const Tensor xt(Shape{4}, std::vector<double>(x.begin(), x.end()));
  const std::vector<int> labels{2, 0, 1};
  const auto losses = class_losses(f.model, x, plan, labels, f.sched);
  for (std::size_t l = 0; l < labels.size(); ++l) {
    double oracle = 0.0;
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const Tensor eps(Shape{4}, std::vector<double>(plan.noise.row(i).begin(), plan.noise.row(i).end()));
      oracle += diffusion_loss(f.model, xt, labels[l], plan.timesteps[i], eps, f.sched).item();
    }
    EXPECT_NEAR(losses[l], oracle / static_cast<double>(plan.size()), 1e-12);
  }
}

TEST(ClassLosses, ZeroInitModelGivesIdenticalLossesAndFirstLabel) {
  Denoiser m(DenoiserConfig{3, 4, 8, 4, 2, 100}, 1);
  RngStream rng(2, 2);
  const McPlan plan = make_mc_plan(default_schedule(), 5, 3, TimestepStrategy::EvenlySpaced, rng);
  const double x[] = {0.1, 0.2, -0.3};
  const EvalRow row = classify(m, x, plan, default_schedule());
  for (std::size_t l = 1; l < 4; ++l) EXPECT_EQ(*row.losses[l], *row.losses[0]);
  EXPECT_EQ(row.predicted, 0);
  for (const auto& p : row.posterior) EXPECT_DOUBLE_EQ(*p, 0.25);
}

TEST(Posterior, KnownValuesAndProperties) {
  const double l2[] = {0.0, std::log(2.0)};
  const auto p = posterior_from_losses(l2);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);

  RngStream rng(3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> losses(5);
    for (double& v : losses) v = rng.uniform(0.0, 3.0);
    const auto post = posterior_from_losses(losses);
    EXPECT_NEAR(std::accumulate(post.begin(), post.end(), 0.0), 1.0, 1e-12);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        if (losses[i] < losses[j]) {
          EXPECT_GT(post[i], post[j]);
        }
      }
    }
    EXPECT_EQ(argmin_first(losses), static_cast<std::size_t>(std::max_element(post.begin(), post.end()) - post.begin()));
    std::vector<double> shifted = losses;
    for (double& v : shifted) v += 123.0;
    const auto post2 = posterior_from_losses(shifted);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(post[i], post2[i], 1e-12);
  }
}

TEST(Posterior, ExtremeSpreadStaysFinite) {
  const double losses[] = {0.0, 1e4, 5e3};
  const auto p = posterior_from_losses(losses);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 0.0);
  const double bad[] = {0.0, std::nan("")};
  EXPECT_THROW(posterior_from_losses(bad), NumericError);
  EXPECT_THROW(posterior_from_losses(std::span<const double>{}), Error);
}

TEST(Argmin, TiesGoToSmallestIndex) {
  const double v[] = {1.0, 0.5, 0.5, 2.0};
  EXPECT_EQ(argmin_first(v), 1u);
  const double all[] = {3.0, 3.0};
  EXPECT_EQ(argmin_first(all), 0u);
}

// ---- staged elimination ----

TEST(StagePlan, DefaultsAndValidation) {
  const auto ten = StagePlan::default_for(10);
  ASSERT_EQ(ten.stages.size(), 2u);
  EXPECT_EQ(ten.stages[0].num_timesteps, 10u);
  EXPECT_EQ(ten.stages[0].keep, 5u);
  EXPECT_EQ(ten.stages[1].num_timesteps, 100u);
  EXPECT_EQ(StagePlan::default_for(4).stages[0].keep, 2u);
  EXPECT_EQ(StagePlan::default_for(5).stages[0].keep, 3u);
  EXPECT_EQ(StagePlan::default_for(2).stages.size(), 1u);
  for (std::size_t c : {2u, 3u, 4u, 10u, 17u}) EXPECT_NO_THROW(StagePlan::default_for(c).validate(c));

  EXPECT_THROW(StagePlan{}.validate(4), Error);
  EXPECT_THROW((StagePlan{{{10, 2}}}).validate(4), Error);
  EXPECT_THROW((StagePlan{{{0, 1}}}).validate(4), Error);
  EXPECT_THROW((StagePlan{{{10, 5}, {10, 1}}}).validate(4), Error);
  EXPECT_THROW((StagePlan{{{10, 2}, {10, 2}, {10, 1}}}).validate(4), Error);
  EXPECT_NO_THROW((StagePlan{{{10, 2}, {0, 1}}}).validate(4));
}

TEST(Staged, SingleStageEqualsFlat) {
  const auto& f = trained();
  for (std::size_t i = 0; i < 10; ++i) {
    const auto x = f.data.test.sample(i);
    RngStream a(5, i), b(5, i);
    const EvalRow staged = classify_staged(f.model, x, StagePlan{{{20, 1}}}, TimestepStrategy::UniformRandom, f.sched, a);
    const EvalRow flat =
        classify(f.model, x, make_mc_plan(f.sched, 20, 4, TimestepStrategy::UniformRandom, b), f.sched);
    EXPECT_EQ(staged.predicted, flat.predicted);
    for (std::size_t l = 0; l < 3; ++l) EXPECT_NEAR(*staged.losses[l], *flat.losses[l], 1e-12);
  }
}

TEST(Staged, KeepAllThenDecideEqualsFlatOnPooledPlan) {
  const auto& f = trained();
  const auto x = f.data.test.sample(3);
  RngStream a(6, 1), b(6, 1);
  const EvalRow staged =
      classify_staged(f.model, x, StagePlan{{{7, 3}, {13, 1}}}, TimestepStrategy::UniformRandom, f.sched, a);
  const McPlan p1 = make_mc_plan(f.sched, 7, 4, TimestepStrategy::UniformRandom, b);
  const McPlan p2 = make_mc_plan(f.sched, 13, 4, TimestepStrategy::UniformRandom, b);
  const EvalRow flat = classify(f.model, x, concat(p1, p2), f.sched);
  EXPECT_EQ(staged.predicted, flat.predicted);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_NEAR(*staged.losses[l], *flat.losses[l], 1e-12);
}

TEST(Staged, EliminatedLabelsAreEmptyAndMarked) {
  const auto& f = trained();
  const auto x = f.data.test.sample(0);
  RngStream s(7, 7);
  // Stage 1 adds no pairs, so the two survivors of stage 0 are reported with their stage-0 means.
  const EvalRow row = classify_staged(f.model, x, StagePlan{{{10, 2}, {0, 1}}}, TimestepStrategy::EvenlySpaced,
                                      f.sched, s);
  std::size_t present = 0;
  for (std::size_t l = 0; l < 3; ++l) {
    if (row.losses[l]) {
      ++present;
      EXPECT_TRUE(row.posterior[l]);
      EXPECT_EQ(row.eliminated_at[l], -1);
    } else {
      EXPECT_FALSE(row.posterior[l]);
      EXPECT_EQ(row.eliminated_at[l], 0);
    }
  }
  EXPECT_EQ(present, 2u);
  ASSERT_TRUE(row.losses[static_cast<std::size_t>(row.predicted)]);
}

TEST(Staged, PredictionIsArgminOfFinalPooledMeans) {
  const auto& f = trained();
  for (std::size_t i = 0; i < 10; ++i) {
    RngStream s(8, i);
    const EvalRow row = classify_staged(f.model, f.data.test.sample(i), StagePlan{{{5, 2}, {20, 1}}},
                                        TimestepStrategy::UniformRandom, f.sched, s);
    int best = -1;
    for (std::size_t l = 0; l < 3; ++l) {
      if (row.losses[l] && (best < 0 || *row.losses[l] < *row.losses[static_cast<std::size_t>(best)])) {
        best = static_cast<int>(l);
      }
    }
    EXPECT_EQ(row.predicted, best);
  }
}

// ---- evaluation ----

TEST(Evaluate, TrainedModelBeatsChance) {
  const auto& f = trained();
  EvalConfig cfg;
  cfg.k = 30;
  const EvalReport r = evaluate(f.model, f.data.test, f.sched, cfg);
  EXPECT_GT(r.accuracy, 0.6);
  EXPECT_EQ(r.rows.size(), f.data.test.size());
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
  const auto& f = trained();
  EvalConfig cfg;
  cfg.k = 10;
  cfg.mode = EvalMode::Staged;
  cfg.strategy = TimestepStrategy::UniformRandom;
  cfg.stage_plan = StagePlan{{{5, 2}, {10, 1}}};
  const EvalReport one = evaluate(f.model, f.data.test, f.sched, cfg);
  cfg.threads = 4;
  const EvalReport four = evaluate(f.model, f.data.test, f.sched, cfg);
  EXPECT_EQ(eval_rows_csv(one), eval_rows_csv(four));
}

TEST(Evaluate, DuplicateSamplesGetIdenticalRows) {
  const auto& f = trained();
  LabeledDataset d = f.data.test;
  const auto first = d.sample(0);
  const std::vector<double> copy(first.begin(), first.end());
  d.samples.insert(d.samples.end(), copy.begin(), copy.end());
  d.labels.push_back(d.labels[0]);
  EvalConfig cfg;
  cfg.k = 10;
  cfg.strategy = TimestepStrategy::UniformRandom;
  const EvalReport r = evaluate(f.model, d, f.sched, cfg);
  const EvalRow& a = r.rows.front();
  const EvalRow& b = r.rows.back();
  EXPECT_EQ(a.predicted, b.predicted);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(*a.losses[l], *b.losses[l]);
}

TEST(Evaluate, SummaryHandlesMissingClasses) {
  EvalReport r;
  r.num_classes = 3;
  EvalRow row;
  row.true_label = 0;
  row.predicted = 0;
  row.losses = {1.0, 2.0, std::nullopt};
  row.posterior = {0.7, 0.3, std::nullopt};
  r.rows.push_back(row);
  row.predicted = 1;
  row.losses = {3.0, 2.0, std::nullopt};
  r.rows.push_back(row);
  summarize(r);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class_accuracy[0], 0.5);
  EXPECT_TRUE(std::isnan(r.per_class_accuracy[1]));
  EXPECT_DOUBLE_EQ(r.mean_losses[0], 2.0);
  EXPECT_TRUE(std::isnan(r.mean_losses[2]));
}

// ---- report ----

TEST(Report, CsvLayoutWithEmptyCells) {
  EvalReport r;
  r.num_classes = 2;
  EvalRow row;
  row.sample_id = 4;
  row.true_label = 1;
  row.predicted = 1;
  row.losses = {std::nullopt, 0.5};
  row.posterior = {std::nullopt, 1.0};
  r.rows.push_back(row);
  EXPECT_EQ(eval_rows_csv(r),
            "sample_id,true_label,predicted_label,loss_0,loss_1,posterior_0,posterior_1\n"
            "4,1,1,,0.5,,1\n");
}

TEST(Report, SummaryJsonEchoesConfig) {
  EvalReport r;
  r.num_classes = 2;
  r.accuracy = 0.75;
  r.per_class_accuracy = {1.0, std::nan("")};
  r.mean_losses = {0.1, 0.2};
  r.config.k = 17;
  r.config.seed = 99;
  const auto j = nlohmann::json::parse(eval_summary_json(r, "abc"));
  EXPECT_EQ(j["run_id"], "abc");
  EXPECT_EQ(j["accuracy"], 0.75);
  EXPECT_TRUE(j["per_class_accuracy"][1].is_null());
  EXPECT_EQ(j["config"]["k"], 17);
  EXPECT_EQ(j["config"]["strategy"], "evenly-spaced");
  EXPECT_EQ(j["seed"], 99);
}

TEST(Report, RunIdIsShaPrefix) { EXPECT_EQ(make_run_id("abc"), "ba7816bf8f01"); }

}  // namespace
}  // namespace tmdc
