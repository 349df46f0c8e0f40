#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace geosage {

using Rng = std::mt19937_64;

// Uniform double in [0, 1). Hand-rolled from raw bits so that results do not
// depend on the standard library's distribution implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Modulo bias is negligible for the sizes used here.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  return n == 0 ? 0 : rng() % n;
}

// Draws an index proportional to the (non-negative) weights.
inline std::size_t draw_categorical(Rng& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double r = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    acc += weights[i];
    if (r < acc) return i;
  }
  return weights.empty() ? 0 : weights.size() - 1;
}

// In-place Fisher-Yates shuffle driven by the shared Rng type.
template <typename T>
void shuffle_vec(Rng& rng, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace geosage
