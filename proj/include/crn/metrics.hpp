#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "crn/errors.hpp"

namespace crn {

struct EdgeAccuracy {
  double full = 0.0;   // over all n*n positions
  double lower = 0.0;  // over the strictly-lower-triangular positions
};

// Fraction of adjacency entries where prediction and truth agree.
inline EdgeAccuracy edge_accuracy(std::span<const uint8_t> pred, std::span<const uint8_t> truth,
                                  int n) {
  if (pred.size() != truth.size() || static_cast<int>(pred.size()) != n * n)
    throw ShapeError("edge_accuracy: got " + std::to_string(pred.size()) + " and " +
                     std::to_string(truth.size()) + " entries for n=" + std::to_string(n));
  int64_t match_full = 0, match_lower = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const size_t s = static_cast<size_t>(i) * n + j;
      const bool agree = (pred[s] != 0) == (truth[s] != 0);
      match_full += agree;
      if (j < i) match_lower += agree;
    }
  EdgeAccuracy acc;
  acc.full = static_cast<double>(match_full) / static_cast<double>(n * n);
  const int lower_count = n * (n - 1) / 2;
  acc.lower = lower_count ? static_cast<double>(match_lower) / lower_count : 1.0;
  return acc;
}

}  // namespace crn
