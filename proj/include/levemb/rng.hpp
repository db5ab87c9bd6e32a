#pragma once

#include <cstdint>
#include <random>

namespace levemb {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named random streams. Every consumer of randomness draws from its own
// stream derived from the single root seed, so adding draws in one module
// never perturbs another.
enum class Stream : std::uint64_t {
  kClusters = 1,
  kPairs = 2,
  kSplit = 3,
  kEstimateM = 4,
  kInit = 5,
  kShuffle = 6,
  kEsdPairs = 7,
  kOutliers = 8,
  kTestPairs = 9,
  kHarness = 10,
};

// Counter-style derivation: (root, stream, index) -> 64-bit seed.
constexpr std::uint64_t stream_seed(std::uint64_t root, Stream stream,
                                    std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(root);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  return splitmix64(h ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t root, Stream stream, std::uint64_t index = 0) {
  return Rng(stream_seed(root, stream, index));
}

}  // namespace levemb
