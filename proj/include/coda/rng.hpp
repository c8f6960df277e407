#pragma once

#include <cstdint>
#include <random>

namespace coda {

using Rng = std::mt19937_64;

// splitmix64 finalizer; decorrelates nearby seeds before they feed an engine
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic substream seed for (seed, stream). Used to give every batch,
// example, or sweep cell its own independent generator.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream + 0x51ed2701a3b4c5d6ULL));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

}  // namespace coda
