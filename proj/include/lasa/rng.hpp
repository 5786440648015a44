#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace lasa {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed from a parent seed and a key path
/// (purpose tag, round, client id, ...). Streams keyed this way do not
/// depend on scheduling order.
inline std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(parent);
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632BE59BD9B4E019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t parent, std::initializer_list<std::uint64_t> keys) {
  return Rng(derive_seed(parent, keys));
}

/// Purpose tags for derive_seed.
namespace stream {
inline constexpr std::uint64_t kSampling = 1;
inline constexpr std::uint64_t kLocalTrain = 2;
inline constexpr std::uint64_t kAttack = 3;
inline constexpr std::uint64_t kPartition = 4;
inline constexpr std::uint64_t kMalicious = 5;
inline constexpr std::uint64_t kDataset = 6;
inline constexpr std::uint64_t kInit = 7;
inline constexpr std::uint64_t kKappa = 8;
inline constexpr std::uint64_t kTestSet = 9;
}  // namespace stream

}  // namespace lasa
