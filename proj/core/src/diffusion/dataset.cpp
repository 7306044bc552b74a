#include "tmdc/diffusion/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "tmdc/tensor/checkpoint.hpp"

namespace tmdc {

Tensor LabeledDataset::batch(std::size_t first, std::size_t count) const {
  if (first + count > size()) throw Error("dataset: batch range past end");
  return Tensor(Shape{count, dim},
                std::vector<double>(samples.begin() + static_cast<std::ptrdiff_t>(first * dim),
                                    samples.begin() + static_cast<std::ptrdiff_t>((first + count) * dim)));
}

Tensor LabeledDataset::gather(std::span<const std::size_t> indices) const {
  std::vector<double> v;
  v.reserve(indices.size() * dim);
  for (std::size_t i : indices) {
    auto s = sample(i);
    v.insert(v.end(), s.begin(), s.end());
  }
  return Tensor(Shape{indices.size(), dim}, std::move(v));
}

std::vector<int> LabeledDataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels[i]);
  return out;
}

void LabeledDataset::validate() const {
  if (labels.empty()) throw Error("dataset: no samples");
  if (dim == 0) throw Error("dataset: zero dimension");
  if (samples.size() != labels.size() * dim) throw Error("dataset: sample buffer does not match N x d");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw Error("dataset: sample " + std::to_string(i) + " has invalid label " + std::to_string(labels[i]));
    }
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i] >= -1.0 && samples[i] <= 1.0)) {
      throw Error("dataset: sample " + std::to_string(i / dim) + " coordinate " + std::to_string(i % dim) +
                  " outside [-1, 1]");
    }
  }
}

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string dataset_to_csv(const LabeledDataset& data) {
  std::string out = "sample_id,label";
  for (std::size_t k = 0; k < data.dim; ++k) out += ",f" + std::to_string(k);
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += std::to_string(i) + ',' + std::to_string(data.labels[i]);
    for (double v : data.sample(i)) {
      out += ',';
      out += format_real(v);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_real(std::string_view s, std::size_t line_no) {
  std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) {
    throw Error("dataset csv: line " + std::to_string(line_no) + ": bad number '" + tmp + "'");
  }
  return v;
}

long parse_int(std::string_view s, std::size_t line_no) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error("dataset csv: line " + std::to_string(line_no) + ": bad integer '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

LabeledDataset dataset_from_csv(std::string_view text, std::size_t num_classes, std::string split) {
  LabeledDataset data;
  data.num_classes = num_classes;
  data.split = std::move(split);
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (line_no == 1) {
      if (fields.size() < 3 || fields[0] != "sample_id" || fields[1] != "label") {
        throw Error("dataset csv: header must start with sample_id,label,f0");
      }
      data.dim = fields.size() - 2;
      for (std::size_t k = 0; k < data.dim; ++k) {
        if (fields[k + 2] != "f" + std::to_string(k)) throw Error("dataset csv: unexpected column " + std::string(fields[k + 2]));
      }
      continue;
    }
    if (fields.size() != data.dim + 2) {
      throw Error("dataset csv: line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) + " fields");
    }
    if (parse_int(fields[0], line_no) != static_cast<long>(data.labels.size())) {
      throw Error("dataset csv: line " + std::to_string(line_no) + ": sample ids must be 0..N-1 in order");
    }
    data.labels.push_back(static_cast<int>(parse_int(fields[1], line_no)));
    for (std::size_t k = 0; k < data.dim; ++k) data.samples.push_back(parse_real(fields[k + 2], line_no));
  }
  data.validate();
  return data;
}

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& data) {
  write_text_atomic(path, dataset_to_csv(data));
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path, std::size_t num_classes, std::string split) {
  return dataset_from_csv(read_text(path), num_classes, std::move(split));
}

}  // namespace tmdc
