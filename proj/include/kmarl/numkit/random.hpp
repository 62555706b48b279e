#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

namespace kmarl {

// std::mt19937_64's output sequence is fixed by the standard; the standard
// distributions are not, so the draws below are written out by hand to keep
// trajectories identical across standard libraries.
using Rng = std::mt19937_64;

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

/// Exponential with the given mean (power gain of a Rayleigh-faded link).
inline double exponential(Rng& rng, double mean) {
  return -mean * std::log1p(-uniform01(rng));
}

/// Derives an independent stream seed from a base seed and a stream label.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace kmarl
