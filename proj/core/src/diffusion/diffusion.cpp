#include "tmdc/diffusion/diffusion.hpp"

#include <cmath>
#include <string>

#include "tmdc/tensor/ops.hpp"
#include "tmdc/tensor/optim.hpp"
#include "tmdc/tensor/tape.hpp"

namespace tmdc {

namespace {

void check_timestep(int t, const NoiseSchedule& sched, const char* where) {
  if (t < 0 || static_cast<std::size_t>(t) >= sched.steps()) {
    throw Error(std::string(where) + ": timestep " + std::to_string(t) + " outside [0, " +
                std::to_string(sched.steps()) + ")");
  }
}

Tensor as_row(const Tensor& x) { return x.rank() == 1 ? ops::reshape(x, Shape{1, x.size()}) : x; }

}  // namespace

Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  check_timestep(t, sched, "forward_noise");
  if (x0.shape() != eps.shape()) {
    throw ShapeError("forward_noise: x0 " + shape_str(x0.shape()) + " vs eps " + shape_str(eps.shape()));
  }
  const double ab = sched.alpha_bar[static_cast<std::size_t>(t)];
  return ops::add(ops::scale(x0, std::sqrt(ab)), ops::scale(eps, std::sqrt(1.0 - ab)));
}

Tensor forward_noise(const Tensor& x0, std::span<const int> t, const Tensor& eps, const NoiseSchedule& sched) {
  if (x0.shape() != eps.shape()) {
    throw ShapeError("forward_noise: x0 " + shape_str(x0.shape()) + " vs eps " + shape_str(eps.shape()));
  }
  if (t.size() != x0.rows()) throw ShapeError("forward_noise: need one timestep per row");
  std::vector<double> signal(t.size()), noise(t.size());
  for (std::size_t r = 0; r < t.size(); ++r) {
    check_timestep(t[r], sched, "forward_noise");
    const double ab = sched.alpha_bar[static_cast<std::size_t>(t[r])];
    signal[r] = std::sqrt(ab);
    noise[r] = std::sqrt(1.0 - ab);
  }
  return ops::add(ops::scale_rows(x0, signal), ops::scale_rows(eps, noise));
}

Tensor diffusion_loss_rows(const Denoiser& model, const Tensor& x0, std::span<const int> y, std::span<const int> t,
                           const Tensor& eps, const NoiseSchedule& sched) {
  const Tensor x_t = forward_noise(x0, t, eps, sched);
  const Tensor diff = ops::sub(eps, model.predict(x_t, t, y));
  return ops::mean(ops::mul(diff, diff), 1);
}

Tensor diffusion_loss(const Denoiser& model, const Tensor& x0, std::span<const int> y, std::span<const int> t,
                      const Tensor& eps, const NoiseSchedule& sched) {
  return ops::mean_all(diffusion_loss_rows(model, x0, y, t, eps, sched));
}

Tensor diffusion_loss(const Denoiser& model, const Tensor& x0, int y, int t, const Tensor& eps,
                      const NoiseSchedule& sched) {
  const int ys[1] = {y};
  const int ts[1] = {t};
  return diffusion_loss(model, as_row(x0), ys, ts, as_row(eps), sched);
}

std::vector<double> train_base(Denoiser& model, const LabeledDataset& data, const NoiseSchedule& sched,
                               const TrainConfig& config, const LossLogFn& log) {
  if (data.size() == 0) throw Error("train_base: dataset is empty");
  if (data.dim != model.config().dim) throw ShapeError("train_base: dataset dimension differs from model");
  if (config.batch_size == 0) throw Error("train_base: batch size must be positive");

  model.set_trainable(true, false);
  Adam optimizer(model.base_parameters());
  std::vector<double> losses;
  losses.reserve(config.steps);
  double window = 0.0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    RngStream rng(config.seed, derive_stream("train_base", step));
    std::vector<std::size_t> idx(config.batch_size);
    std::vector<int> ts(config.batch_size);
    for (auto& i : idx) i = rng.below(data.size());
    for (auto& t : ts) t = static_cast<int>(rng.below(sched.steps()));
    const Tensor eps = randn(rng, Shape{config.batch_size, data.dim});
    const Tensor x0 = data.gather(idx);
    const std::vector<int> ys = data.gather_labels(idx);

    double value = 0.0;
    try {
      Tape tape;
      TapeScope scope(tape);
      optimizer.zero_grad();
      const Tensor loss = diffusion_loss(model, x0, ys, ts, eps, sched);
      value = loss.item();
      if (!std::isfinite(value)) throw NumericError("loss is not finite");
      tape.backward(loss);
      optimizer.check_finite_grads();
    } catch (const NumericError& e) {
      throw NumericError("train_base: step " + std::to_string(step) + ": " + e.what());
    }
    optimizer.step(config.learning_rate);
    losses.push_back(value);
    window += value;
    if (config.log_every > 0 && (step + 1) % config.log_every == 0) {
      if (log) log(step + 1, window / static_cast<double>(config.log_every));
      window = 0.0;
    }
  }
  model.zero_grad();
  return losses;
}

Tensor reverse_chain(const NoisePredictor& predict, const NoiseSchedule& sched, Tensor x_T, std::span<const int> y,
                     RngStream& stream) {
  NoGradScope no_grad;
  Tensor x = x_T.detach();
  const std::size_t rows = x.rows(), dim = x.cols();
  for (std::size_t step = sched.steps(); step-- > 0;) {
    const Tensor eps = predict(x, static_cast<int>(step), y);
    const double a = sched.alpha[step], b = sched.beta[step], ab = sched.alpha_bar[step];
    const double coef = b / std::sqrt(1.0 - ab);
    const double inv = 1.0 / std::sqrt(a);
    std::vector<double> next(rows * dim);
    const auto xv = x.values();
    const auto ev = eps.values();
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = inv * (xv[i] - coef * ev[i]);
    if (step > 0) {
      const Tensor z = randn(stream, Shape{rows, dim});
      const double sigma = std::sqrt(b);
      for (std::size_t i = 0; i < next.size(); ++i) next[i] += sigma * z[i];
    }
    x = Tensor(Shape{rows, dim}, std::move(next));
  }
  return x;
}

Tensor ancestral_sample(const Denoiser& model, const NoiseSchedule& sched, int y, std::size_t n, RngStream& stream) {
  const Tensor x_T = randn(stream, Shape{n, model.config().dim});
  const std::vector<int> ys(n, y);
  auto predict = [&](const Tensor& x_t, int t, std::span<const int> labels) {
    const std::vector<int> ts(labels.size(), t);
    return model.predict(x_t, ts, labels);
  };
  return reverse_chain(predict, sched, x_T, ys, stream);
}

}  // namespace tmdc
