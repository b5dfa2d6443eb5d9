#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace sma {

using Rng = std::mt19937_64;

/// splitmix64 finalizer. Used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Per-run seed: mix64(mix64(master) ^ index). Stable across platforms.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix64(mix64(master) ^ index);
}

// Stream tags so selection, partitioning and SGD draw from unrelated streams
// even when they share a user-facing seed.
namespace stream {
inline constexpr std::uint64_t kSplit = 0x5350;
inline constexpr std::uint64_t kSelect = 0x53454c;
inline constexpr std::uint64_t kPartition = 0x504152;
inline constexpr std::uint64_t kSubsample = 0x535542;
inline constexpr std::uint64_t kRandomSubset = 0x524e44;
}  // namespace stream

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) by rejection; bound > 0.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

/// Fisher-Yates shuffle with a fixed draw sequence, so orders are
/// reproducible independently of the standard library's std::shuffle.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace sma
