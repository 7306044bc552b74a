#include "tmdc/tensor/rng.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace tmdc {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

using Block = std::array<std::uint32_t, 4>;

}  // namespace

Block detail::philox4x32_10(Block ctr, std::uint32_t k0, std::uint32_t k1) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = Block{hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  return ctr;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t RngStream::next_u64() {
  const std::uint64_t block = counter_ >> 1;
  const Block ctr{static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                  static_cast<std::uint32_t>(stream_id_), static_cast<std::uint32_t>(stream_id_ >> 32)};
  const Block out = detail::philox4x32_10(ctr, static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32));
  const std::size_t lane = (counter_ & 1u) * 2;
  ++counter_;
  return (static_cast<std::uint64_t>(out[lane]) << 32) | out[lane + 1];
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform_open_low() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw Error("RngStream::below: n must be positive");
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
  // Reject the top partial bucket so x % n is exactly uniform.
  const std::uint64_t excess = (kMax % n + 1) % n;
  std::uint64_t x = next_u64();
  while (x > kMax - excess) x = next_u64();
  return x % n;
}

void RngStream::normal_pair(double& a, double& b) {
  const double u1 = uniform_open_low();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  a = r * std::cos(theta);
  b = r * std::sin(theta);
}

double RngStream::normal() {
  double a = 0.0, b = 0.0;
  normal_pair(a, b);
  return a;
}

Tensor randn(RngStream& stream, Shape shape) {
  const std::size_t n = numel(shape);
  std::vector<double> v(n);
  std::size_t i = 0;
  for (; i + 1 < n; i += 2) stream.normal_pair(v[i], v[i + 1]);
  if (i < n) v[i] = stream.normal();
  return Tensor(std::move(shape), std::move(v));
}

std::uint64_t hash_bytes(const void* data, std::size_t size, std::uint64_t salt) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xCBF29CE484222325ull ^ splitmix(salt);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return splitmix(h);
}

std::uint64_t derive_stream(std::string_view tag, std::uint64_t a, std::uint64_t b) {
  const std::uint64_t t = hash_bytes(tag.data(), tag.size());
  return splitmix(splitmix(t ^ splitmix(a)) ^ (b * 0xD6E8FEB86659FD93ull));
}

}  // namespace tmdc
