#include "tmdc/tensor/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace tmdc {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " + std::to_string(numel(shape)) +
                     " elements but " + std::to_string(values.size()) + " values were given");
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::span<const double> values) {
  return Tensor(Shape{rows, cols}, std::vector<double>(values.begin(), values.end()));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("tensor: expected rank-2, got " + shape_str(shape()));
  return impl_->shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("tensor: expected rank-2, got " + shape_str(shape()));
  return impl_->shape[1];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("tensor: item() on shape " + shape_str(shape()));
  return impl_->values[0];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const auto c = cols();
  if (r >= rows()) throw ShapeError("tensor: row " + std::to_string(r) + " out of range");
  return std::span<const double>(impl_->values).subspan(r * c, c);
}

void Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  if (flag) {
    impl_->grad.assign(impl_->values.size(), 0.0);
  } else {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  return Tensor(impl_->shape, impl_->values, false);
}

Tensor Tensor::clone() const {
  return Tensor(impl_->shape, impl_->values, impl_->requires_grad);
}

bool all_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace tmdc
