#pragma once

#include <span>

#include "tmdc/tensor/tape.hpp"
#include "tmdc/tensor/tensor.hpp"

// Differentiable primitives. Each records onto the active tape when any input
// requires a gradient. Shape mismatches raise ShapeError naming the primitive
// and both shapes; a non-finite result from finite inputs raises NumericError.
namespace tmdc::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x:[B,in], weight:[out,in], bias:[out] -> x * weight^T + bias
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor silu(const Tensor& a);

/// Concatenates rank-2 tensors with equal row counts along the last axis.
Tensor concat_last(std::span<const Tensor> parts);

/// Row lookup: table:[n,k], indices in [0,n) -> [len(indices), k].
Tensor embedding(const Tensor& table, std::span<const int> indices);

/// Mean over one axis (the axis is removed from the shape).
Tensor mean(const Tensor& a, std::size_t axis);
Tensor mean_all(const Tensor& a);
Tensor sum(const Tensor& a);

/// ||a - b||^2 as a scalar.
Tensor squared_l2(const Tensor& a, const Tensor& b);

/// Clamp to [lo, hi]; gradient passes where lo <= a <= hi.
Tensor clip(const Tensor& a, double lo, double hi);

Tensor reshape(const Tensor& a, Shape shape);

/// a:[n,d] -> [n*times, d], output row r is input row r % n.
Tensor tile_rows(const Tensor& a, std::size_t times);

/// Row r of a:[B,d] multiplied by the constant coeffs[r].
Tensor scale_rows(const Tensor& a, std::span<const double> coeffs);

/// Mean softmax cross-entropy of logits:[B,C] against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace tmdc::ops
