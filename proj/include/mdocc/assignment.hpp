// Copyright 2026 The mdocc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace mdocc::labels {

/// Minimum-cost perfect assignment on a square matrix (Hungarian method with
/// potentials, O(n^3)). `Cost` needs +, -, < and a value-initialized zero;
/// `inf` must exceed any reachable reduced cost.
///
/// Returns col_of_row: the column assigned to each row.
template <class Cost>
std::vector<std::size_t> solve_assignment(const std::vector<std::vector<Cost>>& m, Cost inf) {
  const std::size_t n = m.size();
  std::vector<Cost> u(n + 1), v(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<Cost> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      Cost delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const Cost cur = m[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] = u[p[j]] + delta;
          v[j] = v[j] - delta;
        } else {
          minv[j] = minv[j] - delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of_row(n);
  for (std::size_t j = 1; j <= n; ++j) col_of_row[p[j] - 1] = j - 1;
  return col_of_row;
}

/// Lexicographic (objective, tie-break count) cost.
struct LexCost {
  double value = 0.0;
  long count = 0;

  friend LexCost operator+(LexCost a, LexCost b) { return {a.value + b.value, a.count + b.count}; }
  friend LexCost operator-(LexCost a, LexCost b) { return {a.value - b.value, a.count - b.count}; }
  friend bool operator<(LexCost a, LexCost b) {
    return a.value < b.value || (a.value == b.value && a.count < b.count);
  }
};

}  // namespace mdocc::labels
