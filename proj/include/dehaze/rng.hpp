#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

// Deterministic randomness. Every random decision in the project flows from
// one root seed through the derivation chain below, so runs are reproducible
// bit for bit and any stream can be replayed in isolation:
//
//   stream seed   = derive(root_seed, tag[, index...])   (splitmix64 mixing)
//   stream        = std::mt19937_64(stream seed)
//   uniform u     = (next() >> 11) * 2^-53              in [0,1)
//   normal  n     = sqrt(-2 ln(1-u1)) * cos(2 pi u2)    (two uniforms per draw)
//   integer in [0,n) = floor(u * n)
//
// std::uniform_*_distribution is implementation-defined and deliberately not
// used anywhere.

namespace dehaze::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 1));
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive(derive(seed, a), b);
}

using Engine = std::mt19937_64;

inline Engine engine(std::uint64_t seed) { return Engine(seed); }

inline double uniform(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

inline double uniform(Engine& eng, double lo, double hi) {
  return lo + (hi - lo) * uniform(eng);
}

inline double normal(Engine& eng, double mean = 0.0, double stddev = 1.0) {
  const double u1 = uniform(eng);
  const double u2 = uniform(eng);
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Uniform integer in [0, n). Truncation bias is below 2^-53 per draw.
inline std::uint64_t uniform_index(Engine& eng, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform(eng) * static_cast<double>(n));
}

// Fisher-Yates with the documented index draw (std::shuffle varies by
// standard library).
template <typename T>
void shuffle(std::vector<T>& items, Engine& eng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_index(eng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace dehaze::rng
