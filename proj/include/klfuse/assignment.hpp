#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "klfuse/expfam.hpp"
#include "klfuse/model.hpp"

namespace klfuse {

// Finite stand-in for +inf in augmented matrices; keeps the solver's
// arithmetic totally ordered.
inline constexpr double kUnreachableCost = 1e18;

// Rows index local components, columns candidate targets. Entries must be
// finite; rows may not exceed columns once augmented.
class CostMatrix {
 public:
  explicit CostMatrix(Mat entries) : entries_(std::move(entries)) {
    if (!entries_.allFinite())
      throw std::invalid_argument("cost matrix: non-finite entry");
  }

  int rows() const { return static_cast<int>(entries_.rows()); }
  int cols() const { return static_cast<int>(entries_.cols()); }
  double operator()(int r, int c) const { return entries_(r, c); }
  const Mat& entries() const { return entries_; }

 private:
  Mat entries_;
};

// Binary singly-stochastic assignment: each row maps to exactly one column,
// each column receives at most one row.
struct AssignmentMatrix {
  std::vector<int> row_to_col;

  int rows() const { return static_cast<int>(row_to_col.size()); }

  bool feasible(int n_cols) const {
    std::vector<char> seen(n_cols, 0);
    for (int c : row_to_col) {
      if (c < 0 || c >= n_cols || seen[c]) return false;
      seen[c] = 1;
    }
    return true;
  }
};

struct AssignmentSolution {
  AssignmentMatrix assignment;
  double total_cost;
};

// Exact minimum-cost rectangular assignment via shortest augmenting paths
// (Jonker-Volgenant style), O(rows^2 * cols). Deterministic: the column scan
// runs in index order and strict comparisons keep the lowest-index optimum.
inline AssignmentSolution solve_rectangular_assignment(const CostMatrix& c) {
  const int n_rows = c.rows();
  const int n_cols = c.cols();
  if (n_rows > n_cols)
    throw std::invalid_argument("assignment: rows exceed columns");
  const Mat& a = c.entries();
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<double> u(n_rows, 0.0), v(n_cols + 1, 0.0);
  std::vector<int> col_to_row(n_cols + 1, -1);
  std::vector<int> way(n_cols + 1, n_cols);

  for (int r = 0; r < n_rows; ++r) {
    col_to_row[n_cols] = r;
    int j0 = n_cols;
    std::vector<double> minv(n_cols, inf);
    std::vector<char> used(n_cols + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = col_to_row[j0];
      double delta = inf;
      int j1 = -1;
      for (int j = 0; j < n_cols; ++j) {
        if (used[j]) continue;
        const double cur = a(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n_cols; ++j) {
        if (used[j]) {
          u[col_to_row[j]] += delta;
          v[j] -= delta;
        } else if (j < n_cols) {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_to_row[j0] != -1);
    do {
      const int j1 = way[j0];
      col_to_row[j0] = col_to_row[j1];
      j0 = j1;
    } while (j0 != n_cols);
  }

  AssignmentMatrix result;
  result.row_to_col.assign(n_rows, -1);
  for (int j = 0; j < n_cols; ++j)
    if (col_to_row[j] >= 0) result.row_to_col[col_to_row[j]] = j;
  double total = 0.0;
  for (int r = 0; r < n_rows; ++r) total += a(r, result.row_to_col[r]);
  return {std::move(result), total};
}

// Exhaustive minimum over all injective row->column maps, enumerated in
// lexicographic order so ties resolve to the lowest column indices.
// Test oracle for the solver above; refuses instances past 8 columns.
inline AssignmentSolution brute_force_assignment(const CostMatrix& c) {
  const int n_rows = c.rows();
  const int n_cols = c.cols();
  if (n_cols > 8)
    throw std::invalid_argument("brute force assignment: more than 8 columns");
  if (n_rows > n_cols)
    throw std::invalid_argument("assignment: rows exceed columns");
  const Mat& a = c.entries();

  std::vector<int> current(n_rows, -1), best;
  std::vector<char> taken(n_cols, 0);
  double best_cost = std::numeric_limits<double>::infinity();

  auto recurse = [&](auto&& self, int row, double cost) -> void {
    if (row == n_rows) {
      if (cost < best_cost) {
        best_cost = cost;
        best = current;
      }
      return;
    }
    for (int j = 0; j < n_cols; ++j) {
      if (taken[j]) continue;
      taken[j] = 1;
      current[row] = j;
      self(self, row + 1, cost + a(row, j));
      taken[j] = 0;
    }
  };
  recurse(recurse, 0, 0.0);
  return {AssignmentMatrix{std::move(best)}, best_cost};
}

// Entry (l, g) = KL(global_g || local_l), the per-pair terms of the matching
// objective.
inline CostMatrix build_cost_matrix(const PosteriorBundle& locals,
                                    const GlobalModel& globals) {
  Mat m(locals.size(), globals.size());
  for (int l = 0; l < locals.size(); ++l)
    for (int g = 0; g < globals.size(); ++g)
      m(l, g) = kl_divergence(globals.components[g], locals.components[l]);
  return CostMatrix(std::move(m));
}

// Augments a dataset's cost matrix with the regularizer's marginal costs.
// Existing column g gains lambda * (sqrt(count_g + 1) - sqrt(count_g)), where
// count_g is the number of *other* datasets using g. One extra column per row
// prices a fresh global component at lambda (KL zero: the new component is
// initialized at that local); it is unreachable from other rows.
inline CostMatrix build_augmented_cost_matrix(const CostMatrix& base,
                                              const std::vector<int>& usage_counts,
                                              double lambda) {
  if (lambda < 0.0)
    throw std::invalid_argument("augmented cost matrix: negative lambda");
  if (static_cast<int>(usage_counts.size()) != base.cols())
    throw std::invalid_argument("augmented cost matrix: usage count size mismatch");
  const int n_rows = base.rows();
  const int n_globals = base.cols();

  Mat m(n_rows, n_globals + n_rows);
  for (int g = 0; g < n_globals; ++g) {
    if (usage_counts[g] < 0)
      throw std::invalid_argument("augmented cost matrix: negative usage count");
    const double marginal =
        lambda * (std::sqrt(usage_counts[g] + 1.0) - std::sqrt(double(usage_counts[g])));
    for (int l = 0; l < n_rows; ++l) m(l, g) = base(l, g) + marginal;
  }
  for (int extra = 0; extra < n_rows; ++extra)
    for (int l = 0; l < n_rows; ++l)
      m(l, n_globals + extra) = (l == extra) ? lambda : kUnreachableCost;
  return CostMatrix(std::move(m));
}

}  // namespace klfuse
