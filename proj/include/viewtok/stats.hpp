#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

namespace viewtok {

struct Summary {
  double mean = 0.0;
  double median = 0.0;
};

// Median of an even count is the mean of the two middle values. Empty input gives zeros.
inline Summary summarize(std::vector<double> values) {
  Summary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

}  // namespace viewtok
