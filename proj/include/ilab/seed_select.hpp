#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilab/corpus.hpp"
#include "ilab/error.hpp"
#include "ilab/kmeans.hpp"
#include "ilab/rng.hpp"

namespace ilab {

enum class Strategy { random, cluster_based, known_cluster_based, cluster_based_sentence_emb, predicted_cluster_sampling };

inline std::string_view strategy_key(Strategy s) {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::cluster_based: return "cb";
    case Strategy::known_cluster_based: return "kcb";
    case Strategy::cluster_based_sentence_emb: return "cse";
    case Strategy::predicted_cluster_sampling: return "pcs";
  }
  return "random";
}

// Names as they appear in result tables.
inline std::string_view strategy_display_name(Strategy s) {
  switch (s) {
    case Strategy::random: return "RandomSampling";
    case Strategy::cluster_based: return "ClusterBased";
    case Strategy::known_cluster_based: return "KnownClusterBased";
    case Strategy::cluster_based_sentence_emb: return "ClusterBasedSentenceEmb";
    case Strategy::predicted_cluster_sampling: return "PredictedClusterSampling";
  }
  return "RandomSampling";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  for (auto st : {Strategy::random, Strategy::cluster_based, Strategy::known_cluster_based,
                  Strategy::cluster_based_sentence_emb, Strategy::predicted_cluster_sampling})
    if (s == strategy_key(st) || s == strategy_display_name(st)) return st;
  return std::nullopt;
}

struct SeedPlan {
  Strategy strategy = Strategy::random;
  std::vector<RecordId> selected_ids;  // ascending
  std::size_t n = 0;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const SeedPlan&, const SeedPlan&) = default;
};

inline nlohmann::ordered_json seed_plan_to_json(const SeedPlan& p) {
  nlohmann::ordered_json j;
  j["strategy"] = strategy_key(p.strategy);
  j["n"] = p.n;
  j["rng_seed"] = p.rng_seed;
  j["selected_ids"] = p.selected_ids;
  return j;
}

inline SeedPlan seed_plan_from_json(const nlohmann::json& j) {
  try {
    SeedPlan p;
    auto st = parse_strategy(j.at("strategy").get<std::string>());
    if (!st) throw Error(Errc::parse_error, "seed plan: unknown strategy");
    p.strategy = *st;
    p.n = j.at("n").get<std::size_t>();
    p.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    p.selected_ids = j.at("selected_ids").get<std::vector<RecordId>>();
    if (p.selected_ids.size() != p.n) throw Error(Errc::parse_error, "seed plan: |selected_ids| != n");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("seed plan: ") + e.what());
  }
}

// Seed count for a pool: round half up, never zero.
inline std::size_t seed_count(double labeled_ratio, std::size_t pool_size) {
  const std::size_t n = round_half_up(labeled_ratio * static_cast<double>(pool_size));
  if (n == 0) throw Error(Errc::degenerate, "labeled_ratio selects 0 seeds from a pool of " + std::to_string(pool_size));
  return n;
}

// Independent stream for a second use of the same seed (splitmix64 finaliser).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Largest-remainder apportionment of `total` across groups proportional to
// their sizes. Remainder ties go to the lower group index; no group receives
// more than its size.
inline std::vector<std::size_t> apportion(const std::vector<std::size_t>& sizes, std::size_t total) {
  std::size_t population = 0;
  for (auto s : sizes) population += s;
  if (total > population) throw Error(Errc::invalid_argument, "apportion: total exceeds population");
  std::vector<std::size_t> out(sizes.size(), 0);
  if (population == 0) return out;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    // Exact integer quotient; the remainder fraction only orders the leftovers.
    const std::size_t num = total * sizes[i];
    out[i] = num / population;
    assigned += out[i];
    remainders.emplace_back(static_cast<double>(num % population) / static_cast<double>(population), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t left = total - assigned;
  while (left > 0) {
    for (const auto& [frac, i] : remainders) {
      if (left == 0) break;
      if (out[i] < sizes[i]) {
        ++out[i];
        --left;
      }
    }
  }
  return out;
}

namespace detail {

inline Matrix pool_matrix(const std::vector<UtteranceRecord>& pool, const EmbeddingMatrix& emb) {
  std::vector<std::size_t> rows;
  rows.reserve(pool.size());
  for (const auto& r : pool) {
    if (r.id < 0 || static_cast<std::size_t>(r.id) >= emb.rows())
      throw Error(Errc::invalid_argument, "seed selection: embeddings do not cover record " + std::to_string(r.id));
    rows.push_back(static_cast<std::size_t>(r.id));
  }
  return emb.data.select_rows(rows);
}

inline KMeansOptions seed_kmeans_options() { return KMeansOptions{100, 1e-4}; }

inline SeedPlan finish(Strategy s, std::vector<RecordId> ids, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  SeedPlan p;
  p.strategy = s;
  p.n = ids.size();
  p.selected_ids = std::move(ids);
  p.rng_seed = seed;
  return p;
}

// Nearest unselected pool member to each centroid, clusters in index order.
inline std::vector<RecordId> nearest_to_centroids(const std::vector<UtteranceRecord>& pool, const Matrix& x,
                                                  const Matrix& centroids) {
  std::vector<char> taken(pool.size(), 0);
  std::vector<RecordId> out;
  out.reserve(centroids.rows());
  std::vector<std::size_t> order(pool.size());
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    std::vector<double> d(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) d[i] = squared_distance(x.row(i), centroids.row(c));
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (d[a] != d[b]) return d[a] < d[b];
      return pool[a].id < pool[b].id;
    });
    for (auto i : order) {
      if (taken[i]) continue;
      taken[i] = 1;
      out.push_back(pool[i].id);
      break;
    }
  }
  return out;
}

inline void check_n(std::size_t n, std::size_t pool_size) {
  if (pool_size == 0) throw Error(Errc::empty_pool, "empty labeled pool");
  if (n < 1 || n > pool_size)
    throw Error(Errc::invalid_argument,
                "n out of range: " + std::to_string(n) + " not in [1, " + std::to_string(pool_size) + "]");
}

}  // namespace detail

inline SeedPlan select_random(const std::vector<UtteranceRecord>& pool, std::size_t n, std::uint64_t rng_seed) {
  detail::check_n(n, pool.size());
  Rng rng(rng_seed);
  std::vector<RecordId> ids;
  for (auto i : rng.sample_indices(pool.size(), n)) ids.push_back(pool[i].id);
  return detail::finish(Strategy::random, std::move(ids), rng_seed);
}

inline SeedPlan select_cluster_based(const std::vector<UtteranceRecord>& pool, const EmbeddingMatrix& emb,
                                     std::size_t n, std::uint64_t rng_seed) {
  detail::check_n(n, pool.size());
  const Matrix x = detail::pool_matrix(pool, emb);
  const auto km = kmeans(x, n, rng_seed, detail::seed_kmeans_options());
  return detail::finish(Strategy::cluster_based, detail::nearest_to_centroids(pool, x, km.centroids), rng_seed);
}

// Cluster-based selection over an alternative embedding of the same records.
inline SeedPlan select_cluster_based_sentence_emb(const std::vector<UtteranceRecord>& pool,
                                                  const EmbeddingMatrix& alt_emb, std::size_t n,
                                                  std::uint64_t rng_seed) {
  auto plan = select_cluster_based(pool, alt_emb, n, rng_seed);
  plan.strategy = Strategy::cluster_based_sentence_emb;
  return plan;
}

inline SeedPlan select_known_cluster_based(const std::vector<UtteranceRecord>& pool, const EmbeddingMatrix& emb,
                                           double labeled_ratio, const ClassMask& mask, std::uint64_t rng_seed) {
  const std::size_t k = mask.known_classes.size();
  if (k == 0) throw Error(Errc::invalid_argument, "known-cluster selection needs >= 1 known class");
  if (pool.empty()) throw Error(Errc::empty_pool, "empty labeled pool");
  if (k > pool.size()) throw Error(Errc::invalid_argument, "more known classes than pool members");
  const Matrix x = detail::pool_matrix(pool, emb);
  const auto km = kmeans(x, k, rng_seed, detail::seed_kmeans_options());

  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < pool.size(); ++i) members[km.assignments[i]].push_back(i);
  Rng rng(derive_seed(rng_seed, 1));
  std::vector<RecordId> ids;
  for (const auto& m : members) {
    const std::size_t take = round_half_up(labeled_ratio * static_cast<double>(m.size()));
    for (auto j : rng.sample_indices(m.size(), std::min(take, m.size()))) ids.push_back(pool[m[j]].id);
  }
  if (ids.empty()) throw Error(Errc::degenerate, "degenerate seed plan: every cluster rounds to 0 picks");
  return detail::finish(Strategy::known_cluster_based, std::move(ids), rng_seed);
}

inline SeedPlan select_predicted_cluster_sampling(const std::vector<UtteranceRecord>& pool,
                                                  const EmbeddingMatrix& emb, std::size_t n, std::size_t k_prime,
                                                  std::uint64_t rng_seed) {
  detail::check_n(n, pool.size());
  if (k_prime < 2) throw Error(Errc::invalid_argument, "k_prime must be >= 2");
  if (k_prime > pool.size()) throw Error(Errc::invalid_argument, "k_prime exceeds pool size");
  const Matrix x = detail::pool_matrix(pool, emb);
  const std::size_t k = estimate_k(x, k_prime, rng_seed, detail::seed_kmeans_options());
  if (k == 0) throw Error(Errc::degenerate, "estimate_k returned 0 clusters");
  const auto km = kmeans(x, k, derive_seed(rng_seed, 2), detail::seed_kmeans_options());

  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < pool.size(); ++i) members[km.assignments[i]].push_back(i);
  std::vector<std::size_t> sizes(k);
  for (std::size_t c = 0; c < k; ++c) sizes[c] = members[c].size();
  const auto quota = apportion(sizes, n);

  Rng rng(derive_seed(rng_seed, 3));
  std::vector<RecordId> ids;
  for (std::size_t c = 0; c < k; ++c)
    for (auto j : rng.sample_indices(members[c].size(), quota[c])) ids.push_back(pool[members[c][j]].id);
  return detail::finish(Strategy::predicted_cluster_sampling, std::move(ids), rng_seed);
}

}  // namespace ilab
