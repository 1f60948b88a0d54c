#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "ilab/error.hpp"
#include "ilab/matrix.hpp"
#include "ilab/rng.hpp"

namespace ilab {

struct KMeansOptions {
  std::size_t max_iter = 100;
  // Stop once ||shift|| <= rel_tol * ||centroids|| (Frobenius norms).
  double rel_tol = 1e-4;
};

struct KMeansResult {
  std::vector<std::size_t> assignments;
  Matrix centroids;
  double inertia = 0.0;
  // Inertia measured after each assignment step; non-increasing.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;

  [[nodiscard]] std::vector<std::size_t> cluster_sizes() const {
    std::vector<std::size_t> sizes(centroids.rows(), 0);
    for (auto a : assignments) ++sizes[a];
    return sizes;
  }
};

namespace detail {

// Nearest centroid, ties to the lowest cluster index.
inline std::pair<std::size_t, double> nearest(std::span<const double> p, const Matrix& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centroids.rows(); ++k) {
    const double d = squared_distance(p, centroids.row(k));
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return {best, best_d};
}

inline Matrix kmeanspp_init(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(k, points.cols());
  std::vector<char> chosen(n, 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());

  auto place = [&](std::size_t c, std::size_t idx) {
    chosen[idx] = 1;
    auto src = points.row(idx);
    std::copy(src.begin(), src.end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c)));
  };

  place(0, rng.below(n));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        pick = i;
        if (acc > r) break;
      }
    } else {
      // Every point coincides with a chosen centre; fall back to the lowest unused index.
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) {
          pick = i;
          break;
        }
    }
    place(c, pick);
  }
  return centroids;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. Sequential, so results depend only
// on (points, k, rng_seed, opts).
inline KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t rng_seed,
                           const KMeansOptions& opts = {}) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  if (k == 0) throw Error(Errc::invalid_argument, "kmeans: k must be >= 1");
  if (k > n)
    throw Error(Errc::invalid_argument,
                "kmeans: k > rows (" + std::to_string(k) + " > " + std::to_string(n) + ")");
  if (!points.all_finite()) throw Error(Errc::non_finite, "kmeans: non-finite input");

  Rng rng(rng_seed);
  KMeansResult res;
  res.centroids = detail::kmeanspp_init(points, k, rng);
  res.assignments.assign(n, 0);
  std::vector<double> dist2(n, 0.0);

  auto assign_all = [&]() {
    bool changed = false;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto [c, d] = detail::nearest(points.row(i), res.centroids);
      if (c != res.assignments[i]) changed = true;
      res.assignments[i] = c;
      dist2[i] = d;
      inertia += d;
    }
    return std::pair{changed, inertia};
  };

  auto update_means = [&]() {
    Matrix sums(k, dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row(res.assignments[i]);
      auto src = points.row(i);
      for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
      ++counts[res.assignments[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty clusters keep their position
      auto dst = res.centroids.row(c);
      auto src = sums.row(c);
      for (std::size_t d = 0; d < dim; ++d) dst[d] = src[d] / static_cast<double>(counts[c]);
    }
    return counts;
  };

  for (std::size_t it = 0; it < opts.max_iter; ++it) {
    auto [changed, inertia] = assign_all();
    if (!res.inertia_history.empty()) {
      const double prev = res.inertia_history.back();
      if (inertia > prev + 1e-9 * std::max(1.0, prev))
        throw std::logic_error("kmeans: inertia increased between iterations");
    }
    res.inertia_history.push_back(inertia);
    res.iterations = it + 1;
    if (it > 0 && !changed) break;

    Matrix old = res.centroids;
    auto counts = update_means();

    // Reseed each empty cluster at the point farthest from its own centroid.
    std::vector<char> used(n, 0);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (used[i]) continue;
        const double d = squared_distance(points.row(i), res.centroids.row(res.assignments[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == n || far_d <= 0.0) continue;  // nothing to take: all points sit on centroids
      used[far] = 1;
      auto src = points.row(far);
      std::copy(src.begin(), src.end(), res.centroids.row(c).begin());
    }

    double shift = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < old.data().size(); ++i) {
      const double d = res.centroids.data()[i] - old.data()[i];
      shift += d * d;
      norm += old.data()[i] * old.data()[i];
    }
    if (shift <= opts.rel_tol * opts.rel_tol * std::max(norm, 1e-300)) {
      auto [c2, final_inertia] = assign_all();
      (void)c2;
      const double prev = res.inertia_history.back();
      if (final_inertia > prev + 1e-9 * std::max(1.0, prev))
        throw std::logic_error("kmeans: inertia increased between iterations");
      res.inertia_history.push_back(final_inertia);
      update_means();
      break;
    }
  }

  res.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    res.inertia += squared_distance(points.row(i), res.centroids.row(res.assignments[i]));
  return res;
}

// Number of clusters whose size reaches the threshold.
inline std::size_t count_dense_clusters(std::span<const std::size_t> sizes, double threshold) {
  std::size_t k = 0;
  for (auto s : sizes)
    if (static_cast<double>(s) >= threshold) ++k;
  return k;
}

// Over-cluster with k_prime centres and keep the clusters at least as large as
// the mean size rows / k_prime.
inline std::size_t estimate_k(const Matrix& points, std::size_t k_prime, std::uint64_t rng_seed,
                              const KMeansOptions& opts = {}) {
  if (k_prime == 0) throw Error(Errc::invalid_argument, "estimate_k: k_prime must be >= 1");
  auto res = kmeans(points, k_prime, rng_seed, opts);
  const double t = static_cast<double>(points.rows()) / static_cast<double>(k_prime);
  auto sizes = res.cluster_sizes();
  return count_dense_clusters(sizes, t);
}

}  // namespace ilab
