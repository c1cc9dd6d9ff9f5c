#pragma once

#include <cstdint>
#include <random>

namespace rankreg {

using Engine = std::mt19937_64;

// Stream tags keep independent uses of one (seed, index) pair apart.
enum class StreamTag : std::uint64_t {
  Data = 1,
  Perturbation = 2,
  Shift = 3,
  Calibration = 4,
  Replicate = 5,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Engine for stream `index` under `seed`; identical for any evaluation order.
inline Engine make_stream(std::uint64_t seed, std::uint64_t index, StreamTag tag) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(tag));
  h = splitmix64(h ^ index);
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Engine(seq);
}

}  // namespace rankreg
