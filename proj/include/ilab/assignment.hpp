#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ilab/error.hpp"
#include "ilab/matrix.hpp"

namespace ilab {

struct AssignmentResult {
  // row_to_col[r] = column assigned to row r.
  std::vector<std::size_t> row_to_col;
  double cost = 0.0;
};

namespace detail {

struct HungarianSolution {
  std::vector<std::size_t> row_to_col;
  std::vector<double> u, v;  // dual potentials, cost(i,j) - u[i] - v[j] >= 0
};

// O(n^3) shortest-augmenting-path Hungarian method on a square matrix.
inline HungarianSolution hungarian(const Matrix& a) {
  const std::size_t n = a.rows();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
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
  HungarianSolution s;
  s.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) s.row_to_col[p[j] - 1] = j - 1;
  s.u.assign(u.begin() + 1, u.end());
  s.v.assign(v.begin() + 1, v.end());
  return s;
}

// Kuhn augmenting path restricted to rows >= first_row and free columns.
inline bool augment(std::size_t r, const std::vector<std::vector<std::size_t>>& adj,
                    const std::vector<char>& col_blocked, std::vector<char>& seen,
                    std::vector<std::size_t>& col_owner) {
  constexpr auto none = std::numeric_limits<std::size_t>::max();
  for (auto c : adj[r]) {
    if (col_blocked[c] || seen[c]) continue;
    seen[c] = 1;
    if (col_owner[c] == none || augment(col_owner[c], adj, col_blocked, seen, col_owner)) {
      col_owner[c] = r;
      return true;
    }
  }
  return false;
}

inline bool has_perfect_matching(std::size_t first_row, std::size_t n,
                                 const std::vector<std::vector<std::size_t>>& adj,
                                 const std::vector<char>& col_blocked) {
  constexpr auto none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> owner(n, none);
  for (std::size_t r = first_row; r < n; ++r) {
    std::vector<char> seen(n, 0);
    if (!augment(r, adj, col_blocked, seen, owner)) return false;
  }
  return true;
}

}  // namespace detail

// Minimum-cost perfect assignment on a square cost matrix. Among all optimal
// assignments, returns the lexicographically smallest row_to_col vector.
//
// Optimal assignments are exactly the perfect matchings on the zero
// reduced-cost edges of an optimal dual, so the tie-break is a greedy walk
// over rows that keeps a perfect matching feasible on that edge set.
inline AssignmentResult min_cost_assignment(const Matrix& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw Error(Errc::invalid_argument, "assignment: cost matrix must be square");
  if (!cost.all_finite()) throw Error(Errc::non_finite, "assignment: non-finite cost");
  AssignmentResult out;
  if (n == 0) return out;

  auto sol = detail::hungarian(cost);
  double scale = 1.0;
  for (double c : cost.data()) scale = std::max(scale, std::abs(c));
  const double eps = 1e-10 * scale * static_cast<double>(n + 1);

  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (cost(i, j) - sol.u[i] - sol.v[j] <= eps) adj[i].push_back(j);

  std::vector<char> blocked(n, 0);
  out.row_to_col.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    bool placed = false;
    for (auto j : adj[i]) {
      if (blocked[j]) continue;
      blocked[j] = 1;
      if (detail::has_perfect_matching(i + 1, n, adj, blocked)) {
        out.row_to_col[i] = j;
        placed = true;
        break;
      }
      blocked[j] = 0;
    }
    if (!placed) {
      // Tolerance too tight for this input; the plain Hungarian answer is still optimal.
      out.row_to_col = sol.row_to_col;
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) out.cost += cost(i, out.row_to_col[i]);
  return out;
}

// Maximum-weight assignment on a rectangular matrix, zero-padded to square.
// row_to_col entries >= cols() mean the row matched a padding column.
inline AssignmentResult max_weight_assignment(const Matrix& weight) {
  const std::size_t n = std::max(weight.rows(), weight.cols());
  double maxw = 0.0;
  for (double w : weight.data()) maxw = std::max(maxw, w);
  Matrix cost(n, n, maxw);
  for (std::size_t i = 0; i < weight.rows(); ++i)
    for (std::size_t j = 0; j < weight.cols(); ++j) cost(i, j) = maxw - weight(i, j);
  auto res = min_cost_assignment(cost);
  AssignmentResult out;
  out.row_to_col.assign(res.row_to_col.begin(), res.row_to_col.begin() + static_cast<std::ptrdiff_t>(weight.rows()));
  for (std::size_t i = 0; i < weight.rows(); ++i)
    if (out.row_to_col[i] < weight.cols()) out.cost += weight(i, out.row_to_col[i]);
  return out;
}

// Permutation mapping each current cluster id to a previous-epoch id, chosen
// to minimise the summed Euclidean distance between matched centroids.
inline std::vector<std::size_t> align_centroids(const Matrix& prev, const Matrix& curr) {
  if (prev.rows() != curr.rows())
    throw Error(Errc::invalid_argument, "align_centroids: K mismatch (" + std::to_string(prev.rows()) +
                                            " vs " + std::to_string(curr.rows()) + ")");
  if (prev.cols() != curr.cols())
    throw Error(Errc::invalid_argument, "align_centroids: feature dimension mismatch");
  const std::size_t k = prev.rows();
  Matrix cost(k, k);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t p = 0; p < k; ++p) cost(c, p) = distance(curr.row(c), prev.row(p));
  return min_cost_assignment(cost).row_to_col;
}

}  // namespace ilab
