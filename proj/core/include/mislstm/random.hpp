#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mislstm {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based substream seed: the same key always yields the same stream,
/// regardless of the order in which streams are created.
inline std::uint64_t substream_seed(std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t k : key) h = splitmix64(h ^ splitmix64(k));
  return h;
}

inline Rng substream(std::initializer_list<std::uint64_t> key) { return Rng(substream_seed(key)); }

}  // namespace mislstm
