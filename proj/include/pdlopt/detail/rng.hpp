#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <vector>

namespace pdlopt::detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform in [0, n) by rejection; identical on every standard library.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t x;
  do x = rng();
  while (x >= limit);
  return x % n;
}

/// Fisher-Yates with `bounded`.
template <typename T>
void shuffle(std::vector<T>& xs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = xs.size(); i > 1; --i) std::swap(xs[i - 1], xs[bounded(rng, i)]);
}

}  // namespace pdlopt::detail
