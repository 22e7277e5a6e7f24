#pragma once

#include <cstdint>
#include <random>

namespace statekit {

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return mix_seed(mix_seed(a) ^ (b + 0x632BE59BD9B4E019ULL));
}

using Engine = std::mt19937_64;

// Uniform in [0, 1) from the top 53 bits. Unlike std::uniform_real_distribution
// the sequence is identical across standard library implementations.
inline double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, bound). Rejection sampling keeps it unbiased.
inline std::uint64_t uniform_below(Engine& engine, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = engine();
  while (x >= limit) x = engine();
  return x % bound;
}

}  // namespace statekit
