#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "ilab/assignment.hpp"
#include "ilab/error.hpp"
#include "ilab/matrix.hpp"

namespace ilab {

struct ContingencyTable {
  // counts[i][j]: items with true class i and predicted cluster j, both
  // re-indexed densely in ascending order of the original ids.
  std::vector<std::vector<std::size_t>> counts;
  std::vector<std::size_t> row_sums;  // per true class
  std::vector<std::size_t> col_sums;  // per cluster
  std::size_t total = 0;

  [[nodiscard]] std::size_t classes() const { return row_sums.size(); }
  [[nodiscard]] std::size_t clusters() const { return col_sums.size(); }
};

namespace detail {
template <typename T>
std::vector<std::size_t> densify(const std::vector<T>& labels, std::size_t& distinct) {
  std::map<T, std::size_t> index;
  for (const auto& l : labels) index.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [k, v] : index) v = next++;
  distinct = next;
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = index.at(labels[i]);
  return out;
}

inline double comb2(double x) { return x * (x - 1.0) / 2.0; }
}  // namespace detail

template <typename T, typename P>
ContingencyTable contingency(const std::vector<T>& truth, const std::vector<P>& pred) {
  if (truth.size() != pred.size())
    throw Error(Errc::invalid_argument, "metrics: label vectors differ in length");
  std::size_t nt = 0, np = 0;
  auto t = detail::densify(truth, nt);
  auto p = detail::densify(pred, np);
  ContingencyTable ct;
  ct.counts.assign(nt, std::vector<std::size_t>(np, 0));
  ct.row_sums.assign(nt, 0);
  ct.col_sums.assign(np, 0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    ++ct.counts[t[i]][p[i]];
    ++ct.row_sums[t[i]];
    ++ct.col_sums[p[i]];
  }
  ct.total = t.size();
  return ct;
}

// Normalised mutual information with the arithmetic mean of the two entropies.
template <typename T, typename P>
double nmi(const std::vector<T>& truth, const std::vector<P>& pred) {
  if (truth.empty()) throw Error(Errc::invalid_argument, "nmi: need at least one item");
  const auto ct = contingency(truth, pred);
  const double n = static_cast<double>(ct.total);
  auto entropy = [n](const std::vector<std::size_t>& sums) {
    double h = 0.0;
    for (auto s : sums)
      if (s > 0) {
        const double p = static_cast<double>(s) / n;
        h -= p * std::log(p);
      }
    return h;
  };
  const double hu = entropy(ct.row_sums);
  const double hv = entropy(ct.col_sums);
  if (hu == 0.0 && hv == 0.0) return 1.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < ct.classes(); ++i)
    for (std::size_t j = 0; j < ct.clusters(); ++j) {
      const auto c = ct.counts[i][j];
      if (c == 0) continue;
      const double nij = static_cast<double>(c);
      mi += nij / n *
            std::log(n * nij / (static_cast<double>(ct.row_sums[i]) * static_cast<double>(ct.col_sums[j])));
    }
  return std::clamp(mi / (0.5 * (hu + hv)), 0.0, 1.0);
}

template <typename T, typename P>
double ari(const std::vector<T>& truth, const std::vector<P>& pred) {
  if (truth.size() < 2) throw Error(Errc::invalid_argument, "ari: need at least two items");
  const auto ct = contingency(truth, pred);
  double index = 0.0, a = 0.0, b = 0.0;
  for (const auto& row : ct.counts)
    for (auto c : row) index += detail::comb2(static_cast<double>(c));
  for (auto s : ct.row_sums) a += detail::comb2(static_cast<double>(s));
  for (auto s : ct.col_sums) b += detail::comb2(static_cast<double>(s));
  const double expected = a * b / detail::comb2(static_cast<double>(ct.total));
  const double max_index = 0.5 * (a + b);
  // Only reached when both partitions are all-singletons or both a single block.
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

// Clustering accuracy under the best one-to-one cluster->class matching.
template <typename T, typename P>
double aligned_acc(const std::vector<T>& truth, const std::vector<P>& pred) {
  if (truth.empty()) throw Error(Errc::invalid_argument, "aligned_acc: need at least one item");
  const auto ct = contingency(truth, pred);
  Matrix w(ct.clusters(), ct.classes());
  for (std::size_t i = 0; i < ct.classes(); ++i)
    for (std::size_t j = 0; j < ct.clusters(); ++j) w(j, i) = static_cast<double>(ct.counts[i][j]);
  const auto res = max_weight_assignment(w);
  return std::round(res.cost) / static_cast<double>(ct.total);
}

struct RunAggregate {
  std::string metric;
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;  // population

  [[nodiscard]] std::string formatted() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f\xC2\xB1%.2f", mean, stddev);
    return buf;
  }
};

inline RunAggregate aggregate(std::string metric, const std::vector<double>& values) {
  if (values.empty()) throw Error(Errc::invalid_argument, "aggregate: empty run list");
  RunAggregate agg;
  agg.metric = std::move(metric);
  agg.values = values;
  double sum = 0.0;
  for (double v : values) sum += v;
  agg.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
  agg.stddev = std::sqrt(ss / static_cast<double>(values.size()));
  return agg;
}

}  // namespace ilab
