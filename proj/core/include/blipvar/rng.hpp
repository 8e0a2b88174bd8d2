#pragma once

#include <cstdint>
#include <random>

namespace blipvar {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent substream id so that parallel workers seeded from
// the same master seed never share an engine state.
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL + stream * 0xd1342543de82ef95ULL);
  return splitmix64(s);
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  std::uint64_t s = substream(seed, stream);
  const std::uint32_t w0 = static_cast<std::uint32_t>(splitmix64(s));
  const std::uint32_t w1 = static_cast<std::uint32_t>(splitmix64(s));
  const std::uint32_t w2 = static_cast<std::uint32_t>(splitmix64(s));
  const std::uint32_t w3 = static_cast<std::uint32_t>(splitmix64(s));
  std::seed_seq seq{w0, w1, w2, w3};
  return std::mt19937_64(seq);
}

}  // namespace blipvar
