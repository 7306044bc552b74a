#include "tmdc/tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace tmdc::ops {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using CVec = Eigen::Map<const Eigen::VectorXd>;
using Vec = Eigen::Map<Eigen::VectorXd>;

CMapR cmat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return CMapR(t.values().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MapR gmat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return MapR(t.mutable_grad().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] void mismatch(std::string_view op, const Tensor& a, const Tensor& b, std::string_view why = "") {
  std::string msg = std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape());
  if (!why.empty()) msg += " (" + std::string(why) + ")";
  throw ShapeError(msg);
}

void require_rank(std::string_view op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
  }
}

Tensor emit(std::string_view op, Shape shape, std::vector<double> values, bool record) {
  if (!all_finite(values)) {
    throw NumericError(std::string(op) + ": result overflowed to a non-finite value");
  }
  return Tensor(std::move(shape), std::move(values), record);
}

void push(std::string_view op, const Tensor& out, Tape::BackwardFn fn) {
  Tape::active()->record(op, out, std::move(fn));
}

bool wants(const Tensor& t) { return t.requires_grad(); }

double sigmoid(double x) {
  if (x >= 0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("add", a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  const bool rec = should_record({&a, &b});
  Tensor out = emit("add", a.shape(), std::move(v), rec);
  if (rec) {
    push("add", out, [a, b, out]() mutable {
      auto g = out.grad();
      if (wants(a)) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(b)) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("sub", a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
  const bool rec = should_record({&a, &b});
  Tensor out = emit("sub", a.shape(), std::move(v), rec);
  if (rec) {
    push("sub", out, [a, b, out]() mutable {
      auto g = out.grad();
      if (wants(a)) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(b)) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("mul", a, b);
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  const bool rec = should_record({&a, &b});
  Tensor out = emit("mul", a.shape(), std::move(v), rec);
  if (rec) {
    push("mul", out, [a, b, out]() mutable {
      auto g = out.grad();
      if (wants(a)) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (wants(b)) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * factor;
  const bool rec = should_record({&a});
  Tensor out = emit("scale", a.shape(), std::move(v), rec);
  if (rec) {
    push("scale", out, [a, out, factor]() mutable {
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) mismatch("matmul", a, b, "inner dimensions differ");
  std::vector<double> v(m * n);
  MapR(v.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)).noalias() =
      cmat(a, m, k) * cmat(b, k, n);
  const bool rec = should_record({&a, &b});
  Tensor out = emit("matmul", Shape{m, n}, std::move(v), rec);
  if (rec) {
    push("matmul", out, [a, b, out, m, k, n]() mutable {
      CMapR g(out.grad().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
      if (wants(a)) gmat(a, m, k).noalias() += g * cmat(b, k, n).transpose();
      if (wants(b)) gmat(b, k, n).noalias() += cmat(a, m, k).transpose() * g;
    });
  }
  return out;
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("affine", x, 2);
  require_rank("affine", weight, 2);
  const std::size_t rows = x.rows(), in = x.cols(), out_dim = weight.rows();
  if (weight.cols() != in) mismatch("affine", x, weight, "input width vs weight columns");
  if (bias.shape() != Shape{out_dim}) mismatch("affine", weight, bias, "bias must be [out]");
  std::vector<double> v(rows * out_dim);
  MapR y(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out_dim));
  y.noalias() = cmat(x, rows, in) * cmat(weight, out_dim, in).transpose();
  y.rowwise() += CVec(bias.values().data(), static_cast<Eigen::Index>(out_dim)).transpose();
  const bool rec = should_record({&x, &weight, &bias});
  Tensor out = emit("affine", Shape{rows, out_dim}, std::move(v), rec);
  if (rec) {
    push("affine", out, [x, weight, bias, out, rows, in, out_dim]() mutable {
      CMapR g(out.grad().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out_dim));
      if (wants(x)) gmat(x, rows, in).noalias() += g * cmat(weight, out_dim, in);
      if (wants(weight)) gmat(weight, out_dim, in).noalias() += g.transpose() * cmat(x, rows, in);
      if (wants(bias)) {
        Vec(bias.mutable_grad().data(), static_cast<Eigen::Index>(out_dim)) += g.colwise().sum().transpose();
      }
    });
  }
  return out;
}

Tensor silu(const Tensor& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * sigmoid(a[i]);
  const bool rec = should_record({&a});
  Tensor out = emit("silu", a.shape(), std::move(v), rec);
  if (rec) {
    push("silu", out, [a, out]() mutable {
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = sigmoid(a[i]);
        ga[i] += g[i] * s * (1.0 + a[i] * (1.0 - s));
      }
    });
  }
  return out;
}

Tensor concat_last(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_rank("concat_last", p, 2);
    if (p.rows() != rows) mismatch("concat_last", parts[0], p, "row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> v(rows * total);
  bool rec = false;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& p = parts[k];
    rec = rec || should_record({&p});
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(p.values().begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k],
                  v.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += widths[k];
  }
  Tensor out = emit("concat_last", Shape{rows, total}, std::move(v), rec);
  if (rec) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    push("concat_last", out, [inputs, widths, out, rows, total]() mutable {
      auto g = out.grad();
      std::size_t off = 0;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        if (wants(inputs[k])) {
          auto gi = inputs[k].mutable_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < widths[k]; ++c) gi[r * widths[k] + c] += g[r * total + off + c];
          }
        }
        off += widths[k];
      }
    });
  }
  return out;
}

Tensor embedding(const Tensor& table, std::span<const int> indices) {
  require_rank("embedding", table, 2);
  const std::size_t n = table.rows(), k = table.cols();
  std::vector<double> v(indices.size() * k);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const int idx = indices[r];
    if (idx < 0 || static_cast<std::size_t>(idx) >= n) {
      throw ShapeError("embedding: index " + std::to_string(idx) + " out of range for table " +
                       shape_str(table.shape()));
    }
    std::copy_n(table.row(static_cast<std::size_t>(idx)).begin(), k,
                v.begin() + static_cast<std::ptrdiff_t>(r * k));
  }
  const bool rec = should_record({&table});
  Tensor out = emit("embedding", Shape{indices.size(), k}, std::move(v), rec);
  if (rec) {
    std::vector<int> idx(indices.begin(), indices.end());
    push("embedding", out, [table, idx, out, k]() mutable {
      auto g = out.grad();
      auto gt = table.mutable_grad();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto base = static_cast<std::size_t>(idx[r]) * k;
        for (std::size_t c = 0; c < k; ++c) gt[base + c] += g[r * k + c];
      }
    });
  }
  return out;
}

Tensor mean(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw ShapeError("mean: axis " + std::to_string(axis) + " out of range for shape " + shape_str(a.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape()[i];
  const std::size_t n = a.shape()[axis];
  if (n == 0) throw ShapeError("mean: empty axis in shape " + shape_str(a.shape()));
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis) out_shape.push_back(a.shape()[i]);
  }
  std::vector<double> v(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < inner; ++i) v[o * inner + i] += a[(o * n + j) * inner + i];
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& x : v) x *= inv;
  const bool rec = should_record({&a});
  Tensor out = emit("mean", std::move(out_shape), std::move(v), rec);
  if (rec) {
    push("mean", out, [a, out, outer, inner, n, inv]() mutable {
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t i = 0; i < inner; ++i) ga[(o * n + j) * inner + i] += g[o * inner + i] * inv;
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  const bool rec = should_record({&a});
  Tensor out = emit("sum", Shape{}, std::vector<double>{s}, rec);
  if (rec) {
    push("sum", out, [a, out]() mutable {
      const double g = out.grad()[0];
      for (double& x : a.mutable_grad()) x += g;
    });
  }
  return out;
}

Tensor mean_all(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean_all: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor squared_l2(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch("squared_l2", a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  const bool rec = should_record({&a, &b});
  Tensor out = emit("squared_l2", Shape{}, std::vector<double>{s}, rec);
  if (rec) {
    push("squared_l2", out, [a, b, out]() mutable {
      const double g = out.grad()[0];
      if (wants(a)) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += 2.0 * g * (a[i] - b[i]);
      }
      if (wants(b)) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < b.size(); ++i) gb[i] -= 2.0 * g * (a[i] - b[i]);
      }
    });
  }
  return out;
}

Tensor clip(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw Error("clip: lower bound exceeds upper bound");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(a[i], lo, hi);
  const bool rec = should_record({&a});
  Tensor out = emit("clip", a.shape(), std::move(v), rec);
  if (rec) {
    push("clip", out, [a, out, lo, hi]() mutable {
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a[i] >= lo && a[i] <= hi) ga[i] += g[i];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> v(a.values().begin(), a.values().end());
  const bool rec = should_record({&a});
  Tensor out = emit("reshape", std::move(shape), std::move(v), rec);
  if (rec) {
    push("reshape", out, [a, out]() mutable {
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor tile_rows(const Tensor& a, std::size_t times) {
  require_rank("tile_rows", a, 2);
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> v;
  v.reserve(n * d * times);
  for (std::size_t t = 0; t < times; ++t) v.insert(v.end(), a.values().begin(), a.values().end());
  const bool rec = should_record({&a});
  Tensor out = emit("tile_rows", Shape{n * times, d}, std::move(v), rec);
  if (rec) {
    push("tile_rows", out, [a, out, n, d, times]() mutable {
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t t = 0; t < times; ++t) {
        for (std::size_t i = 0; i < n * d; ++i) ga[i] += g[t * n * d + i];
      }
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& a, std::span<const double> coeffs) {
  require_rank("scale_rows", a, 2);
  const std::size_t rows = a.rows(), d = a.cols();
  if (coeffs.size() != rows) {
    throw ShapeError("scale_rows: " + std::to_string(coeffs.size()) + " coefficients for shape " +
                     shape_str(a.shape()));
  }
  std::vector<double> v(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < d; ++c) v[r * d + c] = a[r * d + c] * coeffs[r];
  }
  const bool rec = should_record({&a});
  Tensor out = emit("scale_rows", a.shape(), std::move(v), rec);
  if (rec) {
    std::vector<double> k(coeffs.begin(), coeffs.end());
    push("scale_rows", out, [a, out, k, d]() mutable {
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t r = 0; r < k.size(); ++r) {
        for (std::size_t c = 0; c < d; ++c) ga[r * d + c] += g[r * d + c] * k[r];
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t rows = logits.rows(), classes = logits.cols();
  if (labels.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_str(logits.shape()));
  }
  if (rows == 0) throw ShapeError("cross_entropy: empty batch");
  std::vector<double> probs(rows * classes);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ShapeError("cross_entropy: label " + std::to_string(y) + " out of range for " +
                       std::to_string(classes) + " classes");
    }
    auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[r * classes + c] = std::exp(row[c] - mx);
      z += probs[r * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= z;
    total += -(row[static_cast<std::size_t>(y)] - mx - std::log(z));
  }
  const double inv = 1.0 / static_cast<double>(rows);
  const bool rec = should_record({&logits});
  Tensor out = emit("cross_entropy", Shape{}, std::vector<double>{total * inv}, rec);
  if (rec) {
    std::vector<int> y(labels.begin(), labels.end());
    push("cross_entropy", out, [logits, out, probs = std::move(probs), y, classes, inv]() mutable {
      const double g = out.grad()[0] * inv;
      auto gl = logits.mutable_grad();
      for (std::size_t r = 0; r < y.size(); ++r) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double onehot = (static_cast<int>(c) == y[r]) ? 1.0 : 0.0;
          gl[r * classes + c] += g * (probs[r * classes + c] - onehot);
        }
      }
    });
  }
  return out;
}

}  // namespace tmdc::ops
