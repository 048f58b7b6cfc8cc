#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mixaudit {

// std::mt19937_64 output is fixed by the standard, but the std distributions are
// not. These helpers keep seeded runs identical across standard libraries.
using Rng = std::mt19937_64;

// Uniform in [0, 1) with 53 random bits.
inline double uniform_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform in [0, n) by rejection; n > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return draw % n;
}

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

// Index drawn from a discrete distribution given its cumulative weights.
inline std::size_t sample_cumulative(const std::vector<double>& cumulative, Rng& rng) {
  const double target = uniform_real(rng) * cumulative.back();
  std::size_t lo = 0;
  std::size_t hi = cumulative.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (cumulative[mid] > target) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return lo;
}

}  // namespace mixaudit
