#pragma once

#include <vector>

#include "bigroc/error.hpp"

namespace bigroc {

inline std::vector<int> label_histogram(const std::vector<int>& labels, int classes) {
  detail::require(classes >= 1, "label_histogram: need at least one class");
  std::vector<int> h(classes, 0);
  for (int y : labels) {
    detail::require(y >= 0 && y < classes, "label_histogram: label " + std::to_string(y) +
                                               " outside [0, " + std::to_string(classes) + ")");
    ++h[y];
  }
  return h;
}

/// Pearson chi-square statistic of a histogram against the uniform distribution:
/// sum_c (n_c - n/N)^2 / (n/N). Zero for a perfectly balanced histogram.
inline double chi_square_to_uniform(const std::vector<int>& hist) {
  detail::require(!hist.empty(), "chi_square_to_uniform: empty histogram");
  double total = 0.0;
  for (int v : hist) total += v;
  if (total == 0.0) return 0.0;
  const double e = total / static_cast<double>(hist.size());
  double s = 0.0;
  for (int v : hist) s += (v - e) * (v - e) / e;
  return s;
}

}  // namespace bigroc
