#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "tmdc/tensor/checkpoint.hpp"

namespace tmdc {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

/// SHA-256 of the serialized checkpoint form (names, shapes and raw values).
std::string hash_tensors(std::span<const NamedTensor> tensors);

}  // namespace tmdc
