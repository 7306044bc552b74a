#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tmdc/tensor/tensor.hpp"

namespace tmdc {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Binary layout, all integers little-endian:
//   "TMDC" | u32 version | u32 entry count
//   per entry: u32 name length | name bytes | u32 rank | u64 dims[rank] | u64 offset | u64 count
//   data section: raw little-endian binary64 values; offsets are bytes from its start.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> deserialize_checkpoint(std::span<const std::uint8_t> bytes);

/// Writes atomically (temp file + rename).
void save_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

const Tensor& find_tensor(std::span<const NamedTensor> tensors, std::string_view name);
bool has_tensor(std::span<const NamedTensor> tensors, std::string_view name);

/// Atomic whole-file write used by every persisted artifact.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace tmdc
