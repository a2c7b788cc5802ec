#pragma once

#include <cstdint>
#include <random>

namespace ptaloc {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for trial `index` of a run; depends only on (master, index) so that
/// parallel and serial schedules see the same streams.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Independent sub-stream of a trial seed (e.g. one per receiver).
constexpr std::uint64_t substream(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed + 0x9e3779b97f4a7c15ULL * (tag + 1));
}

/// Uniform double in [0, 1) with 53 random bits; avoids the
/// implementation-defined std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace ptaloc
