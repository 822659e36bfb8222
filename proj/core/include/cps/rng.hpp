#pragma once

#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace cps {

using Rng = std::mt19937_64;

/// Independent stream derived from a base seed and a purpose tag, so that
/// adding a consumer never shifts another consumer's draws.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline std::vector<std::size_t> shuffled_indices(Rng& rng, std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// Stream tags used across modules.
namespace streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t shuffle = 2;
inline constexpr std::uint64_t augment = 3;
inline constexpr std::uint64_t split = 4;
inline constexpr std::uint64_t synthetic = 5;
inline constexpr std::uint64_t backdoor = 6;
inline constexpr std::uint64_t permutation = 7;
inline constexpr std::uint64_t cutmix = 8;
inline constexpr std::uint64_t coeffs = 9;
inline constexpr std::uint64_t replay = 10;
inline constexpr std::uint64_t poison = 11;
}  // namespace streams

}  // namespace cps
