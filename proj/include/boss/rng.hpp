#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace boss {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds a sequence of integers into one well-mixed 64-bit key.
template <typename... Parts>
std::uint64_t derive_key(std::uint64_t seed, Parts... parts) {
  std::uint64_t h = splitmix64(seed);
  ((h = splitmix64(h ^ static_cast<std::uint64_t>(parts))), ...);
  return h;
}

using Rng = std::mt19937_64;

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

/// Identifies the random stream of one augmentation draw.
struct AugmentKey {
  std::uint64_t seed = 0;
  std::uint64_t sample_index = 0;
  std::uint64_t step = 0;

  Rng stream(std::uint64_t channel) const {
    return Rng(derive_key(seed, sample_index, step, channel));
  }
};

}  // namespace boss
