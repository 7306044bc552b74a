#include <benchmark/benchmark.h>

#include <numeric>

#include "tmdc/attacks/attacks.hpp"
#include "tmdc/baseline/baseline.hpp"
#include "tmdc/classifier/classifier.hpp"
#include "tmdc/diffusion/diffusion.hpp"
#include "tmdc/tensor/ops.hpp"
#include "tmdc/tensor/tape.hpp"

namespace tmdc {
namespace {

void BM_Affine(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  RngStream rng(1, 1);
  const Tensor x = randn(rng, Shape{rows, 128}), w = randn(rng, Shape{128, 128}), b = randn(rng, Shape{128});
  for (auto _ : state) benchmark::DoNotOptimize(ops::affine(x, w, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_Affine)->Arg(32)->Arg(200)->Arg(1024);

void BM_DenoiserForward(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Denoiser model(DenoiserConfig{}, 1);
  RngStream rng(2, 2);
  const Tensor x = randn(rng, Shape{rows, 16});
  std::vector<int> t(rows), y(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    t[i] = static_cast<int>(i % 100);
    y[i] = static_cast<int>(i % 4);
  }
  NoGradScope no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(x, t, y));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_DenoiserForward)->Arg(200)->Arg(1024);

void BM_DiffusionTrainStep(benchmark::State& state) {
  Denoiser model(DenoiserConfig{}, 1);
  const NoiseSchedule sched = default_schedule();
  RngStream rng(3, 3);
  const Tensor x0 = randn(rng, Shape{128, 16}), eps = randn(rng, Shape{128, 16});
  std::vector<int> t(128), y(128);
  for (std::size_t i = 0; i < 128; ++i) {
    t[i] = static_cast<int>(i % 100);
    y[i] = static_cast<int>(i % 4);
  }
  for (auto _ : state) {
    model.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    tape.backward(diffusion_loss(model, x0, y, t, eps, sched));
  }
}
BENCHMARK(BM_DiffusionTrainStep);

void BM_ClassifySample(benchmark::State& state) {
  const Denoiser model(DenoiserConfig{}, 1);
  const NoiseSchedule sched = default_schedule();
  RngStream rng(4, 4);
  const McPlan plan = make_mc_plan(sched, static_cast<std::size_t>(state.range(0)), 16, TimestepStrategy::EvenlySpaced, rng);
  std::vector<double> x(16, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(classify(model, x, plan, sched));
}
BENCHMARK(BM_ClassifySample)->Arg(50)->Arg(100);

void BM_ClassifyStaged(benchmark::State& state) {
  const Denoiser model(DenoiserConfig{}, 1);
  const NoiseSchedule sched = default_schedule();
  std::vector<double> x(16, 0.1);
  const StagePlan plan = StagePlan::default_for(4);
  for (auto _ : state) {
    RngStream stream = sample_stream(0, x);
    benchmark::DoNotOptimize(classify_staged(model, x, plan, TimestepStrategy::EvenlySpaced, sched, stream));
  }
}
BENCHMARK(BM_ClassifyStaged);

void BM_PgdBaseline(benchmark::State& state) {
  const DiscriminativeModel model(16, 4, 1);
  RngStream rng(5, 5);
  Tensor x = randn(rng, Shape{128, 16});
  for (double& v : x.mutable_values()) v = std::clamp(v * 0.3, -1.0, 1.0);
  std::vector<int> y(128);
  std::iota(y.begin(), y.end(), 0);
  for (int& v : y) v %= 4;
  AttackConfig cfg;
  cfg.iters = 40;
  const LossGradFn lg = cross_entropy_gradient(model);
  for (auto _ : state) {
    RngStream stream(6, 6);
    benchmark::DoNotOptimize(pgd(lg, x, y, cfg, stream));
  }
}
BENCHMARK(BM_PgdBaseline);

}  // namespace
}  // namespace tmdc

BENCHMARK_MAIN();
