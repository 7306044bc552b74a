#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tmdc/diffusion/dataset.hpp"

namespace tmdc {

/// Gaussian class blobs. The first dim - fine_dims coordinates carry class
/// means at `radius` with noise `sigma`; the optional last fine_dims
/// coordinates carry a second set of means at `fine_radius` with noise
/// `fine_sigma`. With fine_dims = 0 every coordinate uses (radius, sigma).
struct BlobSpec {
  std::size_t num_classes = 4;
  std::size_t dim = 16;
  std::size_t train_per_class = 500;
  std::size_t val_per_class = 64;
  std::size_t test_per_class = 128;
  double radius = 0.8;
  double sigma = 0.15;
  std::size_t fine_dims = 0;
  double fine_radius = 0.0;
  double fine_sigma = 0.0;
  std::uint64_t seed = 0;

  /// Throws Error naming the invalid field.
  void validate() const;
};

/// C points on the sphere of the given radius in n dimensions with maximal
/// pairwise angular separation: a regular simplex spanned by DCT-II basis
/// rows when C < n, deterministic repulsion otherwise. Returns C x n row-major.
std::vector<double> simplex_means(std::size_t n, std::size_t num_classes, double radius);

/// Full C x dim mean matrix for the spec (coarse block then fine block).
std::vector<double> class_means(const BlobSpec& spec);

struct BlobSplits {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
  std::vector<double> means;
};

/// Class-major samples clipped to [-1, 1]; each split has its own RNG stream.
BlobSplits gen_dataset(const BlobSpec& spec);

/// Accuracy of assigning each sample to the nearest class mean.
double nearest_mean_accuracy(const LabeledDataset& data, const std::vector<double>& means);

}  // namespace tmdc
