#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace geosage {

// log(sum_i exp(v[i])) with max subtraction.
inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Turns logits into probabilities in place.
inline void softmax_inplace(std::vector<double>& v) {
  const double lz = log_sum_exp(v);
  for (double& x : v) x = std::exp(x - lz);
}

}  // namespace geosage
