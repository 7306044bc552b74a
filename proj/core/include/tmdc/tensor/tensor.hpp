#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tmdc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Copies share storage (handle semantics); use clone() for a deep copy.
/// Values are treated as immutable once a tensor has been used in a recorded
/// operation; only parameters are updated in place, between tape lifetimes.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// 2-D tensor from a row-major span.
  static Tensor matrix(std::size_t rows, std::size_t cols, std::span<const double> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return impl_->values.size(); }

  /// Rows/cols of a rank-2 tensor; throws ShapeError otherwise.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return impl_->values; }
  std::span<double> mutable_values() { return impl_->values; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->values[i]; }
  std::span<const double> row(std::size_t r) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag);
  std::span<const double> grad() const { return impl_->grad; }
  // Handle constness is shallow: gradient accumulation is allowed through const handles.
  std::span<double> mutable_grad() const { return impl_->grad; }
  void zero_grad();

  /// Deep copy of values; the copy carries no gradient and is not on any tape.
  Tensor detach() const;
  /// Deep copy of values and the requires_grad flag (gradient zeroed).
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  detail::TensorImpl* impl() const { return impl_.get(); }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

bool all_finite(std::span<const double> values);

}  // namespace tmdc
