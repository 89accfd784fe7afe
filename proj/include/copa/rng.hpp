#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace copa {

// splitmix64, used to stretch a user seed into stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d462cd16d3763dULL;
  return z ^ (z >> 31);
}

// Deterministically derives an independent stream seed from a base seed and
// a list of integer tags (stage, content id, step index, ...). The same
// (base, tags) always yields the same seed on every platform.
template <class... Tags>
std::uint64_t derive_seed(std::uint64_t base, Tags... tags) {
  std::uint64_t s = base ^ 0x5851f42d4c957f2dULL;
  ((s = splitmix64(s) ^ static_cast<std::uint64_t>(tags)), ...);
  return splitmix64(s);
}

// Hashes a short label into a tag so call sites can write
// derive_seed(seed, tag("rotation"), content_id).
constexpr std::uint64_t tag(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Uniform double in [0,1). Uses explicit bit arithmetic instead of
// std::uniform_real_distribution so streams are identical across stdlibs.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). n must be positive.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
  std::uint64_t v = rng();
  while (v >= limit) v = rng();
  return v % n;
}

// Standard normal via Box-Muller on the portable uniform stream.
inline double normal01(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  const double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace copa
