#pragma once

// Keyed random streams. Every consumer derives its generator from
// (seed, purpose, index...) so results never depend on call order.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace lap {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_keys(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k));
  return h;
}

enum class Stream : std::uint64_t { Init = 1, ToySample = 2, Shuffle = 3, Augment = 4, Gradcheck = 5 };

inline std::mt19937_64 keyed_rng(std::uint64_t seed, Stream purpose, std::uint64_t a = 0, std::uint64_t b = 0) {
  return std::mt19937_64(mix_keys(seed, {static_cast<std::uint64_t>(purpose), a, b}));
}

/// Deterministic 90/10 split by index hash.
inline bool is_validation_index(std::uint64_t index) { return splitmix64(index) % 10 == 0; }

}  // namespace lap
