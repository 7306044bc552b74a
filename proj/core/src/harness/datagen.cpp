#include "tmdc/harness/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "tmdc/tensor/rng.hpp"

namespace tmdc {

void BlobSpec::validate() const {
  if (num_classes < 2) throw Error("dataset: num_classes must be at least 2");
  if (dim < 2) throw Error("dataset: dim must be at least 2");
  if (!(sigma > 0.0)) throw Error("dataset: sigma must be positive");
  if (!(radius > 0.0)) throw Error("dataset: radius must be positive");
  if (train_per_class == 0 || test_per_class == 0) throw Error("dataset: train and test splits need samples");
  if (fine_dims > 0) {
    if (fine_dims + 2 > dim) throw Error("dataset: fine_dims must leave at least 2 coarse dimensions");
    if (fine_dims < 2) throw Error("dataset: fine_dims must be 0 or at least 2");
    if (!(fine_sigma > 0.0)) throw Error("dataset: fine_sigma must be positive when fine_dims > 0");
    if (!(fine_radius > 0.0)) throw Error("dataset: fine_radius must be positive when fine_dims > 0");
  }
}

namespace {

void normalize(double* v, std::size_t n, double radius) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += v[j] * v[j];
  const double f = radius / std::sqrt(s);
  for (std::size_t j = 0; j < n; ++j) v[j] *= f;
}

std::vector<double> repulsion_means(std::size_t n, std::size_t c, double radius) {
  RngStream rng(0, derive_stream("blobs.repulsion", n, c));
  std::vector<double> m(c * n);
  for (double& v : m) v = rng.normal();
  for (std::size_t i = 0; i < c; ++i) normalize(&m[i * n], n, 1.0);
  std::vector<double> force(c * n);
  for (int it = 0; it < 2000; ++it) {
    std::fill(force.begin(), force.end(), 0.0);
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        if (i == k) continue;
        double d2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) d2 += (m[i * n + j] - m[k * n + j]) * (m[i * n + j] - m[k * n + j]);
        const double w = 1.0 / (d2 * std::sqrt(d2) + 1e-12);
        for (std::size_t j = 0; j < n; ++j) force[i * n + j] += w * (m[i * n + j] - m[k * n + j]);
      }
    }
    const double lr = 0.01;
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < n; ++j) m[i * n + j] += lr * force[i * n + j] / static_cast<double>(c);
      normalize(&m[i * n], n, 1.0);
    }
  }
  for (std::size_t i = 0; i < c; ++i) normalize(&m[i * n], n, radius);
  return m;
}

}  // namespace

std::vector<double> simplex_means(std::size_t n, std::size_t c, double radius) {
  if (c + 1 > n) return repulsion_means(n, c, radius);
  // Rows 1..C of the DCT-II basis are orthogonal; centering them gives a regular simplex.
  std::vector<double> b(c * n);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      b[k * n + i] = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) * static_cast<double>(k + 1) /
                              static_cast<double>(n));
    }
    normalize(&b[k * n], n, 1.0);
  }
  std::vector<double> centroid(n, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < n; ++i) centroid[i] += b[k * n + i] / static_cast<double>(c);
  }
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < n; ++i) b[k * n + i] -= centroid[i];
    normalize(&b[k * n], n, radius);
  }
  return b;
}

std::vector<double> class_means(const BlobSpec& spec) {
  spec.validate();
  const std::size_t c = spec.num_classes, d = spec.dim, coarse = d - spec.fine_dims;
  const auto coarse_means = simplex_means(coarse, c, spec.radius);
  std::vector<double> fine_means;
  if (spec.fine_dims > 0) fine_means = simplex_means(spec.fine_dims, c, spec.fine_radius);
  std::vector<double> m(c * d);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t j = 0; j < coarse; ++j) m[k * d + j] = coarse_means[k * coarse + j];
    for (std::size_t j = 0; j < spec.fine_dims; ++j) m[k * d + coarse + j] = fine_means[k * spec.fine_dims + j];
  }
  return m;
}

namespace {

LabeledDataset make_split(const BlobSpec& spec, const std::vector<double>& means, std::size_t per_class,
                          const std::string& split, std::uint64_t stream_tag) {
  const std::size_t c = spec.num_classes, d = spec.dim, coarse = d - spec.fine_dims;
  RngStream rng(spec.seed, stream_tag);
  LabeledDataset out;
  out.dim = d;
  out.num_classes = c;
  out.split = split;
  out.samples.resize(c * per_class * d);
  out.labels.resize(c * per_class);
  const Tensor noise = randn(rng, Shape{c * per_class, d});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t s = 0; s < per_class; ++s) {
      const std::size_t r = k * per_class + s;
      out.labels[r] = static_cast<int>(k);
      for (std::size_t j = 0; j < d; ++j) {
        const double sd = j < coarse ? spec.sigma : spec.fine_sigma;
        out.samples[r * d + j] = std::clamp(means[k * d + j] + sd * noise[r * d + j], -1.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace

BlobSplits gen_dataset(const BlobSpec& spec) {
  spec.validate();
  BlobSplits s;
  s.means = class_means(spec);
  s.train = make_split(spec, s.means, spec.train_per_class, "train", derive_stream("blobs.train"));
  s.val = make_split(spec, s.means, spec.val_per_class, "val", derive_stream("blobs.val"));
  s.test = make_split(spec, s.means, spec.test_per_class, "test", derive_stream("blobs.test"));
  return s;
}

double nearest_mean_accuracy(const LabeledDataset& data, const std::vector<double>& means) {
  if (data.size() == 0) return 0.0;
  const std::size_t d = data.dim;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.sample(i);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < data.num_classes; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (x[j] - means[k * d + j]) * (x[j] - means[k * d + j]);
      if (s < best_d) {
        best_d = s;
        best = k;
      }
    }
    hits += static_cast<int>(best) == data.labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace tmdc
