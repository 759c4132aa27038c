#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace reconf {

/// Engine used for every stochastic draw in the library.
using RandomEngine = std::mt19937_64;

/// FNV-1a over the bytes of a string. Stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Folds any number of integer keys into one 64-bit seed.
template <class... Keys>
constexpr std::uint64_t derive_seed(std::uint64_t master, Keys... keys) noexcept {
  std::uint64_t h = mix64(master);
  ((h = mix64(h ^ static_cast<std::uint64_t>(keys))), ...);
  return h;
}

/// Spawns an independent stream for a (master, keys...) tuple.
///
/// Streams depend only on their keys, never on the order in which they are
/// requested, so any parallel schedule reproduces the same draws.
template <class... Keys>
RandomEngine make_stream(std::uint64_t master, Keys... keys) {
  const std::uint64_t s = derive_seed(master, keys...);
  std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
  return RandomEngine(seq);
}

/// Small SplitMix64 generator for hot loops that need a fresh stream per
/// trial; seeding costs one word instead of the Mersenne Twister state.
class SplitMix64 {
public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  constexpr result_type operator()() noexcept {
    const std::uint64_t out = mix64(state_);
    state_ += 0x9e3779b97f4a7c15ULL;
    return out;
  }

private:
  std::uint64_t state_;
};

} // namespace reconf
