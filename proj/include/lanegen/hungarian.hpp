#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "lanegen/error.hpp"

namespace lanegen {

// Rectangular minimum-cost assignment (Kuhn-Munkres with row/column
// potentials, O(n^2 m)). `cost(i, j)` is read for i < rows, j < cols.
// Returns, for every row, the assigned column; when rows > cols the
// extra rows get -1. Every column is used at most once.
template <typename T, typename CostFn>
std::vector<int> min_cost_assignment(std::size_t rows, std::size_t cols, CostFn&& cost) {
  std::vector<int> result(rows, -1);
  if (rows == 0 || cols == 0) return result;
  const bool transposed = rows > cols;
  const std::size_t n = transposed ? cols : rows;  // n <= m
  const std::size_t m = transposed ? rows : cols;
  auto c = [&](std::size_t i, std::size_t j) -> T { return transposed ? cost(j, i) : cost(i, j); };

  const T inf = std::numeric_limits<T>::max();
  // 1-based; p[j] is the row matched to column j, 0 = free.
  std::vector<T> u(n + 1, T{}), v(m + 1, T{}), minv(m + 1);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      T delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const T cur = c(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
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

  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed)
      result[j - 1] = static_cast<int>(p[j] - 1);
    else
      result[p[j] - 1] = static_cast<int>(j - 1);
  }
  return result;
}

// Maximum-weight assignment over a non-negative weight matrix given as a
// row-major vector. Pairs with zero weight are reported as unassigned.
template <typename T>
std::vector<int> max_weight_assignment(const std::vector<T>& w, std::size_t rows, std::size_t cols) {
  if (w.size() != rows * cols) throw DimensionMismatch("assignment: weight matrix size mismatch");
  auto assign = min_cost_assignment<T>(rows, cols, [&](std::size_t i, std::size_t j) { return -w[i * cols + j]; });
  for (std::size_t i = 0; i < rows; ++i)
    if (assign[i] >= 0 && !(w[i * cols + static_cast<std::size_t>(assign[i])] > T{})) assign[i] = -1;
  return assign;
}

}  // namespace lanegen
