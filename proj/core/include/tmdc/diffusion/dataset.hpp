#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tmdc/tensor/tensor.hpp"

namespace tmdc {

/// N samples of dimension d in [-1, 1] with labels in [0, C).
struct LabeledDataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> samples;  // row-major N x d
  std::vector<int> labels;
  std::string split;

  std::size_t size() const { return labels.size(); }
  std::span<const double> sample(std::size_t i) const { return std::span<const double>(samples).subspan(i * dim, dim); }

  /// Rows [first, first + count) as a [count, d] tensor.
  Tensor batch(std::size_t first, std::size_t count) const;
  /// Rows at the given indices as a [len, d] tensor.
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;

  /// Throws Error naming the first violated invariant.
  void validate() const;
};

/// CSV with header `sample_id,label,f0..f{d-1}`; values printed with 17
/// significant digits so the text round-trips exactly.
std::string dataset_to_csv(const LabeledDataset& data);
LabeledDataset dataset_from_csv(std::string_view text, std::size_t num_classes, std::string split);

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& data);
LabeledDataset read_dataset_csv(const std::filesystem::path& path, std::size_t num_classes, std::string split);

/// %.17g formatting shared by every CSV writer.
std::string format_real(double value);

}  // namespace tmdc
