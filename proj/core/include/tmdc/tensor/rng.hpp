#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "tmdc/tensor/tensor.hpp"

namespace tmdc {

/// Counter-based random stream (Philox4x32-10).
///
/// Word n of the stream is a pure function of (seed, stream_id, n): streams
/// with different ids never share draws, and results do not depend on which
/// thread or in what order streams are consumed.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter = 0)
      : seed_(seed), stream_id_(stream_id), counter_(counter) {}

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1].
  double uniform_open_low();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Box-Muller, consumes two words).
  double normal();
  /// Two independent standard normals from two words.
  void normal_pair(double& a, double& b);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_;
};

namespace detail {
/// The raw Philox4x32-10 bijection on one 128-bit counter block.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter, std::uint32_t key0,
                                           std::uint32_t key1);
}  // namespace detail

/// I.i.d. N(0, 1) tensor drawn from the stream (advances its counter).
Tensor randn(RngStream& stream, Shape shape);

/// Deterministic stream id from a tag and up to two integers.
std::uint64_t derive_stream(std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0);

/// 64-bit mix of raw bytes (FNV-1a followed by a splitmix finaliser).
std::uint64_t hash_bytes(const void* data, std::size_t size, std::uint64_t salt = 0);

}  // namespace tmdc
