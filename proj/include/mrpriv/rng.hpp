#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mrpriv {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based stream derivation: the seed of a sub-stream depends only on
/// the master seed and the path of counters, never on scheduling order.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(master);
  for (std::uint64_t c : path) s = splitmix64(s ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return s;
}

/// Uniform index in [0, n). n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace mrpriv
