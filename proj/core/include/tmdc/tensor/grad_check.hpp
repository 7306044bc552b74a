#pragma once

#include <functional>
#include <span>

#include "tmdc/tensor/tensor.hpp"

namespace tmdc {

using ScalarFn = std::function<Tensor(const Tensor&)>;

/// |analytic - numeric| / (|numeric| + 1e-12)
double relative_error(double analytic, double numeric);

/// Max over coordinates of the relative error between the tape gradient of f
/// at `point` and a central difference with the given step. Throws
/// NumericError if f is non-finite at any probe point.
double grad_check(const ScalarFn& f, const Tensor& point, double step = 1e-6);

/// Central-difference derivative of f at `point` along `direction`.
double directional_difference(const ScalarFn& f, const Tensor& point, std::span<const double> direction,
                              double step = 1e-6);

}  // namespace tmdc
