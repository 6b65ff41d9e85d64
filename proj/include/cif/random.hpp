#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace cif {

using Rng = std::mt19937_64;

// Uniform in [0, 1) from the top 53 bits; identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double standard_exponential(Rng& rng) { return -std::log1p(-uniform01(rng)); }

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream seed for a (master seed, trial coordinates...) key.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

// Uniform integer in [0, bound).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
  return static_cast<std::uint64_t>(uniform01(rng) * static_cast<double>(bound)) % bound;
}

}  // namespace cif
