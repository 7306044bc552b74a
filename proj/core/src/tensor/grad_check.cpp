#include "tmdc/tensor/grad_check.hpp"

#include <cmath>
#include <string>

#include "tmdc/tensor/tape.hpp"

namespace tmdc {

namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  NoGradScope no_grad;
  const Tensor y = f(x);
  if (y.size() != 1) throw ShapeError("grad_check: f must return a scalar, got " + shape_str(y.shape()));
  const double v = y.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: f is non-finite at a probe point");
  return v;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(numeric) + 1e-12);
}

double grad_check(const ScalarFn& f, const Tensor& point, double step) {
  Tensor x = point.detach();
  x.set_requires_grad(true);
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor y = f(x);
    if (y.size() != 1) throw ShapeError("grad_check: f must return a scalar, got " + shape_str(y.shape()));
    if (!std::isfinite(y.item())) throw NumericError("grad_check: f is non-finite at the base point");
    if (y.requires_grad()) tape.backward(y);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor probe = point.detach();
    const double base = probe[i];
    probe.mutable_values()[i] = base + step;
    const double up = evaluate(f, probe);
    probe.mutable_values()[i] = base - step;
    const double down = evaluate(f, probe);
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, relative_error(x.grad()[i], numeric));
  }
  return worst;
}

double directional_difference(const ScalarFn& f, const Tensor& point, std::span<const double> direction,
                              double step) {
  if (direction.size() != point.size()) {
    throw ShapeError("directional_difference: direction has " + std::to_string(direction.size()) +
                     " entries for shape " + shape_str(point.shape()));
  }
  Tensor up = point.detach(), down = point.detach();
  for (std::size_t i = 0; i < direction.size(); ++i) {
    up.mutable_values()[i] += step * direction[i];
    down.mutable_values()[i] -= step * direction[i];
  }
  return (evaluate(f, up) - evaluate(f, down)) / (2.0 * step);
}

}  // namespace tmdc
