#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "tmdc/diffusion/denoiser.hpp"
#include "tmdc/diffusion/diffusion.hpp"
#include "tmdc/tensor/grad_check.hpp"
#include "tmdc/tensor/ops.hpp"
#include "tmdc/tensor/rng.hpp"
#include "tmdc/tensor/tape.hpp"

namespace tmdc {
namespace {

constexpr double kTol = 1e-6;

Tensor random(Shape shape, std::uint64_t id, double scale = 1.0) {
  RngStream s(11, id);
  Tensor t = randn(s, std::move(shape));
  for (double& v : t.mutable_values()) v *= scale;
  return t;
}

// Weighted sum makes every output coordinate matter with a distinct weight.
Tensor weighted_sum(const Tensor& y) {
  const Tensor w = random(y.shape(), 999);
  return ops::sum(ops::mul(y, w));
}

TEST(GradCheck, ElementwisePrimitives) {
  const Tensor b = random({3, 4}, 2);
  EXPECT_LT(grad_check([&](const Tensor& x) { return weighted_sum(ops::add(x, b)); }, random({3, 4}, 1)), kTol);
  EXPECT_LT(grad_check([&](const Tensor& x) { return weighted_sum(ops::sub(b, x)); }, random({3, 4}, 1)), kTol);
  EXPECT_LT(grad_check([&](const Tensor& x) { return weighted_sum(ops::mul(x, x)); }, random({3, 4}, 1)), kTol);
  EXPECT_LT(grad_check([&](const Tensor& x) { return weighted_sum(ops::scale(x, -2.5)); }, random({3, 4}, 1)), kTol);
  EXPECT_LT(grad_check([&](const Tensor& x) { return weighted_sum(ops::silu(x)); }, random({3, 4}, 1, 3.0)), kTol);
}

TEST(GradCheck, MatmulBothOperands) {
  const Tensor a = random({3, 5}, 3), b = random({5, 2}, 4);
  EXPECT_LT(grad_check([&](const Tensor& x) { return weighted_sum(ops::matmul(x, b)); }, a), kTol);
  EXPECT_LT(grad_check([&](const Tensor& x) { return weighted_sum(ops::matmul(a, x)); }, b), kTol);
}

TEST(GradCheck, AffineAllOperands) {
  const Tensor x = random({4, 3}, 5), w = random({2, 3}, 6), bias = random({2}, 7);
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted_sum(ops::affine(t, w, bias)); }, x), kTol);
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted_sum(ops::affine(x, t, bias)); }, w), kTol);
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted_sum(ops::affine(x, w, t)); }, bias), kTol);
}

TEST(GradCheck, StructuralPrimitives) {
  const Tensor other = random({2, 3}, 8);
  EXPECT_LT(grad_check(
                [&](const Tensor& x) {
                  const std::array<Tensor, 2> parts{x, other};
                  return weighted_sum(ops::concat_last(parts));
                },
                random({2, 2}, 9)),
            kTol);
  const int idx[] = {2, 0, 2, 1};
  EXPECT_LT(grad_check([&](const Tensor& t) { return weighted_sum(ops::embedding(t, idx)); }, random({3, 2}, 10)),
            kTol);
  EXPECT_LT(grad_check([&](const Tensor& x) { return weighted_sum(ops::reshape(x, Shape{6})); }, random({2, 3}, 11)),
            kTol);
  EXPECT_LT(grad_check([&](const Tensor& x) { return weighted_sum(ops::tile_rows(x, 3)); }, random({2, 3}, 12)), kTol);
  const double coeffs[] = {0.5, -2.0};
  EXPECT_LT(grad_check([&](const Tensor& x) { return weighted_sum(ops::scale_rows(x, coeffs)); }, random({2, 3}, 13)),
            kTol);
}

TEST(GradCheck, Reductions) {
  EXPECT_LT(grad_check([](const Tensor& x) { return weighted_sum(ops::mean(x, 0)); }, random({3, 4}, 14)), kTol);
  EXPECT_LT(grad_check([](const Tensor& x) { return weighted_sum(ops::mean(x, 1)); }, random({3, 4}, 14)), kTol);
  EXPECT_LT(grad_check([](const Tensor& x) { return ops::mean_all(ops::mul(x, x)); }, random({3, 4}, 15)), kTol);
  const Tensor target = random({3, 4}, 16);
  EXPECT_LT(grad_check([&](const Tensor& x) { return ops::squared_l2(x, target); }, random({3, 4}, 17)), kTol);
  const int labels[] = {1, 0, 3};
  EXPECT_LT(grad_check([&](const Tensor& x) { return ops::cross_entropy(x, labels); }, random({3, 4}, 18)), kTol);
}

TEST(GradCheck, ClipAwayFromKinks) {
  // Values at least 0.1 from the clip bounds so the central difference never straddles a kink.
  const Tensor x(Shape{4}, {-2.0, -0.5, 0.3, 1.7});
  EXPECT_LT(grad_check([](const Tensor& t) { return weighted_sum(ops::clip(t, -1.0, 1.0)); }, x), kTol);
  Tape tape;
  TapeScope scope(tape);
  Tensor p = x.clone();
  p.set_requires_grad(true);
  tape.backward(ops::sum(ops::clip(p, -1.0, 1.0)));
  EXPECT_EQ(p.grad()[0], 0.0);
  EXPECT_EQ(p.grad()[1], 1.0);
  EXPECT_EQ(p.grad()[3], 0.0);
}

TEST(GradCheck, DirectionalDifferenceMatchesLinearFunction) {
  const Tensor w(Shape{3}, {1.0, -2.0, 0.5});
  const ScalarFn f = [&](const Tensor& x) { return ops::sum(ops::mul(x, w)); };
  const double dir[] = {1.0, 1.0, 2.0};
  EXPECT_NEAR(directional_difference(f, Tensor::zeros(Shape{3}), dir), 1.0 - 2.0 + 1.0, 1e-9);
}

// Analytic directional derivative <grad f(x), v> against a central difference
// along v. Random directions keep the comparison well scaled even when single
// coordinates have near-zero gradients.
double directional_error(const ScalarFn& f, const Tensor& point, RngStream& rng) {
  Tensor x = point.detach();
  x.set_requires_grad(true);
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(f(x));
  }
  const Tensor v = randn(rng, point.shape());
  double analytic = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) analytic += x.grad()[i] * v[i];
  return relative_error(analytic, directional_difference(f, point, v.values(), 1e-5));
}

// Random small denoisers with nonzero output layers: diffusion_loss gradients
// w.r.t. the clean input and every parameter tensor match finite differences.
TEST(GradCheck, DiffusionLossOnRandomDenoisers) {
  const NoiseSchedule sched = build_schedule(10, 1e-3, 0.2);
  for (std::uint64_t trial = 0; trial < 8; ++trial) {
    RngStream rng(100, trial);
    DenoiserConfig cfg{2 + rng.below(4), 2 + rng.below(3), 3 + rng.below(5), 4, 3, sched.steps()};
    Denoiser model(cfg, trial);
    for (auto& l : model.layers()) {
      for (double& v : l.weight.mutable_values()) v = rng.normal() * 0.5;
      for (double& v : l.bias.mutable_values()) v = rng.normal() * 0.1;
    }
    model.set_trainable(false, false);
    const std::size_t rows = 3;
    std::vector<int> ys(rows), ts(rows);
    for (auto& y : ys) y = static_cast<int>(rng.below(cfg.num_classes));
    for (auto& t : ts) t = static_cast<int>(rng.below(sched.steps()));
    const Tensor eps = randn(rng, Shape{rows, cfg.dim});
    const Tensor x0 = randn(rng, Shape{rows, cfg.dim});

    EXPECT_LT(directional_error([&](const Tensor& x) { return diffusion_loss(model, x, ys, ts, eps, sched); }, x0, rng),
              1e-6)
        << "trial " << trial;

    for (std::size_t li = 0; li < model.layers().size(); ++li) {
      const ScalarFn via_weight = [&](const Tensor& w) {
        Denoiser probe = model.clone();
        probe.layers()[li].weight = w;
        return diffusion_loss(probe, x0, ys, ts, eps, sched);
      };
      const ScalarFn via_bias = [&](const Tensor& b) {
        Denoiser probe = model.clone();
        probe.layers()[li].bias = b;
        return diffusion_loss(probe, x0, ys, ts, eps, sched);
      };
      EXPECT_LT(directional_error(via_weight, model.layers()[li].weight, rng), 1e-6) << "trial " << trial << " layer " << li;
      EXPECT_LT(directional_error(via_bias, model.layers()[li].bias, rng), 1e-6) << "trial " << trial << " layer " << li;
    }
  }
}

TEST(GradCheck, ParameterGradientsMatchProbeGradients) {
  // The gradients the trainer sees on live parameters equal those of the probe route.
  const NoiseSchedule sched = build_schedule(10, 1e-3, 0.2);
  Denoiser model(DenoiserConfig{3, 2, 5, 4, 3, 10}, 4);
  RngStream rng(5, 5);
  for (auto& l : model.layers())
    for (double& v : l.weight.mutable_values()) v = rng.normal() * 0.5;
  const std::vector<int> ys{0, 1}, ts{2, 7};
  const Tensor eps = randn(rng, Shape{2, 3}), x0 = randn(rng, Shape{2, 3});
  model.set_trainable(true, false);
  model.zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(diffusion_loss(model, x0, ys, ts, eps, sched));
  }
  const Tensor& w = model.layers()[1].weight;
  Tensor probe_point = w.detach();
  probe_point.set_requires_grad(true);
  {
    Tape tape;
    TapeScope scope(tape);
    Denoiser probe = model.clone();
    probe.set_trainable(false, false);
    probe.layers()[1].weight = probe_point;
    tape.backward(diffusion_loss(probe, x0, ys, ts, eps, sched));
  }
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_DOUBLE_EQ(w.grad()[i], probe_point.grad()[i]);
}

}  // namespace
}  // namespace tmdc
