#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace specdec {

using Rng = std::mt19937_64;

/// 64-bit FNV-1a. Stable across builds, used to name random streams.
constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the stream named `purpose` under the run seed. Every random
/// consumer derives its own stream this way so one --seed controls a run.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) noexcept {
  return splitmix64(seed ^ splitmix64(fnv1a(purpose)));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose,
                                    std::uint64_t index) noexcept {
  return splitmix64(derive_seed(seed, purpose) + splitmix64(index + 1));
}

inline Rng make_rng(std::uint64_t seed, std::string_view purpose) {
  return Rng(derive_seed(seed, purpose));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace specdec
