#pragma once

// Borderline-minority oversampling by paraphrasing, and whole-set
// augmentation. Minority instances whose m nearest neighbours are mostly
// (but not all) from other classes are paraphrased; ParaMote additionally
// requires a label checker to agree with the minority label.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ilab/corpus.hpp"
#include "ilab/error.hpp"
#include "ilab/matrix.hpp"
#include "ilab/paraphrase.hpp"
#include "ilab/seed_select.hpp"

namespace ilab {

enum class Category { noise, danger, safe };

inline std::string_view category_name(Category c) {
  switch (c) {
    case Category::noise: return "noise";
    case Category::danger: return "danger";
    case Category::safe: return "safe";
  }
  return "safe";
}

// noise iff every neighbour is foreign; danger iff m/2 <= m' < m; else safe.
inline Category categorize(std::size_t m, std::size_t m_prime) {
  if (m_prime == m) return Category::noise;
  if (2 * m_prime >= m) return Category::danger;
  return Category::safe;
}

struct NeighborhoodVerdict {
  RecordId instance_id = 0;
  std::size_t m = 0;
  std::size_t m_prime = 0;  // neighbours from other classes
  Category category = Category::safe;

  friend bool operator==(const NeighborhoodVerdict&, const NeighborhoodVerdict&) = default;
};

struct DangerSet {
  std::vector<RecordId> members;
  std::size_t d_num = 0;
  std::size_t p_num = 0;
};

// Labeled training set T: records (all with gold labels) and their
// embeddings, row-aligned.
struct LabeledSet {
  std::vector<UtteranceRecord> records;
  Matrix x;

  [[nodiscard]] std::size_t size() const { return records.size(); }

  void validate() const {
    if (records.size() != x.rows()) throw Error(Errc::invalid_argument, "labeled set: rows and records differ");
    for (const auto& r : records)
      if (!r.gold_label) throw Error(Errc::invalid_argument, "labeled set: record " + std::to_string(r.id) + " has no label");
  }

  void append(const UtteranceRecord& r, std::span<const double> emb) {
    Matrix grown(x.rows() + 1, x.cols());
    std::copy(x.data().begin(), x.data().end(), grown.data().begin());
    std::copy(emb.begin(), emb.end(), grown.row(x.rows()).begin());
    x = std::move(grown);
    records.push_back(r);
  }

  [[nodiscard]] std::map<std::string, std::size_t> class_counts() const {
    std::map<std::string, std::size_t> c;
    for (const auto& r : records) ++c[*r.gold_label];
    return c;
  }

  // Rows of `corpus` selected by id.
  static LabeledSet from_ids(const Corpus& corpus, const std::vector<RecordId>& ids) {
    LabeledSet s;
    std::vector<std::size_t> rows;
    for (auto id : ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= corpus.size())
        throw Error(Errc::invalid_argument, "labeled set: id " + std::to_string(id) + " not in corpus");
      rows.push_back(static_cast<std::size_t>(id));
      s.records.push_back(corpus.records[static_cast<std::size_t>(id)]);
    }
    s.x = corpus.emb.data.select_rows(rows);
    s.validate();
    return s;
  }
};

inline std::vector<NeighborhoodVerdict> classify_borderline(const LabeledSet& t, const std::string& minority,
                                                            std::size_t m) {
  t.validate();
  if (m < 1) throw Error(Errc::invalid_argument, "classify_borderline: m must be >= 1");
  if (m >= t.size())
    throw Error(Errc::invalid_argument, "classify_borderline: m >= |training set| (" + std::to_string(m) +
                                            " >= " + std::to_string(t.size()) + ")");
  std::vector<NeighborhoodVerdict> out;
  std::vector<std::size_t> order(t.size());
  std::vector<double> d(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (*t.records[i].gold_label != minority) continue;
    for (std::size_t j = 0; j < t.size(); ++j) d[j] = squared_distance(t.x.row(i), t.x.row(j));
    order.resize(t.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (d[a] != d[b]) return d[a] < d[b];
                        return t.records[a].id < t.records[b].id;
                      });
    std::size_t foreign = 0;
    for (std::size_t k = 0; k < m; ++k) foreign += *t.records[order[k]].gold_label != minority;
    out.push_back({t.records[i].id, m, foreign, categorize(m, foreign)});
  }
  if (out.empty()) throw Error(Errc::invalid_argument, "classify_borderline: minority class '" + minority + "' is empty");
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
  return out;
}

inline DangerSet danger_set(const std::vector<NeighborhoodVerdict>& verdicts) {
  DangerSet s;
  s.p_num = verdicts.size();
  for (const auto& v : verdicts)
    if (v.category == Category::danger) s.members.push_back(v.instance_id);
  s.d_num = s.members.size();
  return s;
}

enum class OversampleMode { paraphrasing, paramote };

enum class RejectReason { label_mismatch, provider_empty };

inline std::string_view reject_reason_name(RejectReason r) {
  return r == RejectReason::label_mismatch ? "label_mismatch" : "provider_empty";
}

struct ParaphraseCandidate {
  RecordId source_id = 0;
  std::string text;
  std::string provider;
  bool accepted = false;
  std::optional<RejectReason> reject_reason;
};

// New labeled rows plus the audit trail of every candidate considered.
struct GeneratedSamples {
  std::vector<UtteranceRecord> records;
  Matrix x;  // row-aligned with records; each row is its source's embedding
  std::vector<ParaphraseCandidate> candidates;

  void append(GeneratedSamples&& other) {
    Matrix grown(x.rows() + other.x.rows(), other.x.cols() ? other.x.cols() : x.cols());
    std::copy(x.data().begin(), x.data().end(), grown.data().begin());
    std::copy(other.x.data().begin(), other.x.data().end(), grown.data().begin() + static_cast<std::ptrdiff_t>(x.data().size()));
    x = std::move(grown);
    records.insert(records.end(), other.records.begin(), other.records.end());
    candidates.insert(candidates.end(), other.candidates.begin(), other.candidates.end());
  }

  [[nodiscard]] std::size_t accepted() const { return records.size(); }
};

struct ProviderCallOptions {
  std::uint64_t rng_seed = 0;
  // Concurrent provider calls; results are assembled in source order.
  std::size_t max_parallel = 1;
};

namespace detail {

struct ParaphraseRequest {
  std::size_t row;  // into the labeled set
  std::size_t n;
  std::uint64_t seed;
};

inline std::vector<std::vector<std::string>> run_requests(const ParaphraseProvider& provider, const LabeledSet& t,
                                                          const std::vector<ParaphraseRequest>& reqs,
                                                          std::size_t max_parallel) {
  std::vector<std::vector<std::string>> out(reqs.size());
  auto call = [&](std::size_t k) {
    const auto& rec = t.records[reqs[k].row];
    try {
      return provider.paraphrase(rec.text, reqs[k].n, reqs[k].seed);
    } catch (const std::exception& e) {
      throw Error(Errc::provider, "paraphrase provider failed for source_id " + std::to_string(rec.id) + ": " + e.what());
    }
  };
  const std::size_t width = std::max<std::size_t>(1, max_parallel);
  for (std::size_t start = 0; start < reqs.size(); start += width) {
    const std::size_t end = std::min(reqs.size(), start + width);
    if (width == 1) {
      out[start] = call(start);
      continue;
    }
    std::vector<std::future<std::vector<std::string>>> futs;
    for (std::size_t k = start; k < end; ++k) futs.push_back(std::async(std::launch::async, call, k));
    for (std::size_t k = start; k < end; ++k) out[k] = futs[k - start].get();
  }
  return out;
}

inline std::uint64_t request_seed(std::uint64_t base, RecordId source, std::uint64_t pass) {
  return derive_seed(base, pass * 1000003ULL + static_cast<std::uint64_t>(source));
}

}  // namespace detail

// One paraphrase per DANGER member of `minority`. New ids start at *next_id
// and advance it.
inline GeneratedSamples oversample_paraphrase(const LabeledSet& t, const std::string& minority, std::size_t m,
                                              const ParaphraseProvider& provider, OversampleMode mode,
                                              const LabelChecker* checker, RecordId& next_id,
                                              const ProviderCallOptions& opts = {}, std::uint64_t pass = 0) {
  if (mode == OversampleMode::paramote && !checker)
    throw Error(Errc::invalid_argument, "paramote mode requires a label checker");
  const auto danger = danger_set(classify_borderline(t, minority, m));
  std::map<RecordId, std::size_t> row_of;
  for (std::size_t i = 0; i < t.size(); ++i) row_of[t.records[i].id] = i;

  std::vector<detail::ParaphraseRequest> reqs;
  for (auto id : danger.members) reqs.push_back({row_of.at(id), 1, detail::request_seed(opts.rng_seed, id, pass)});
  const auto replies = detail::run_requests(provider, t, reqs, opts.max_parallel);

  GeneratedSamples out;
  out.x = Matrix(0, t.x.cols());
  std::vector<std::size_t> accepted_rows;
  for (std::size_t k = 0; k < reqs.size(); ++k) {
    const auto& src = t.records[reqs[k].row];
    ParaphraseCandidate cand{src.id, replies[k].empty() ? std::string{} : replies[k].front(), provider.name(), false, std::nullopt};
    if (cand.text.empty()) {
      cand.reject_reason = RejectReason::provider_empty;
    } else if (mode == OversampleMode::paramote &&
               checker->predict({src.id, minority, cand.text, t.x.row(reqs[k].row)}) != minority) {
      cand.reject_reason = RejectReason::label_mismatch;
    } else {
      cand.accepted = true;
      out.records.push_back({next_id++, cand.text, minority, Split::train, src.id});
      accepted_rows.push_back(reqs[k].row);
    }
    out.candidates.push_back(std::move(cand));
  }
  out.x = t.x.select_rows(accepted_rows);
  return out;
}

// (factor - 1) paraphrases per labeled record, kept when the checker agrees
// with the record's label.
inline GeneratedSamples augment(const LabeledSet& t, std::size_t factor, const ParaphraseProvider& provider,
                                const LabelChecker& checker, RecordId& next_id, const ProviderCallOptions& opts = {}) {
  t.validate();
  if (factor < 1) throw Error(Errc::invalid_argument, "augment: factor must be >= 1");
  GeneratedSamples out;
  out.x = Matrix(0, t.x.cols());
  if (factor == 1) return out;

  std::vector<detail::ParaphraseRequest> reqs;
  for (std::size_t i = 0; i < t.size(); ++i)
    reqs.push_back({i, factor - 1, detail::request_seed(opts.rng_seed, t.records[i].id, 0)});
  const auto replies = detail::run_requests(provider, t, reqs, opts.max_parallel);

  std::vector<std::size_t> rows;
  for (std::size_t k = 0; k < reqs.size(); ++k) {
    const auto& src = t.records[reqs[k].row];
    const auto& label = *src.gold_label;
    for (std::size_t j = 0; j < std::min(replies[k].size(), factor - 1); ++j) {
      ParaphraseCandidate cand{src.id, replies[k][j], provider.name(), false, std::nullopt};
      if (cand.text.empty()) {
        cand.reject_reason = RejectReason::provider_empty;
      } else if (checker.predict({src.id, label, cand.text, t.x.row(reqs[k].row)}) != label) {
        cand.reject_reason = RejectReason::label_mismatch;
      } else {
        cand.accepted = true;
        out.records.push_back({next_id++, cand.text, label, Split::train, src.id});
        rows.push_back(reqs[k].row);
      }
      out.candidates.push_back(std::move(cand));
    }
  }
  out.x = t.x.select_rows(rows);
  return out;
}

struct BalanceOptions {
  std::size_t m = 5;
  OversampleMode mode = OversampleMode::paraphrasing;
  std::size_t max_passes = 5;
  ProviderCallOptions call;
};

struct BalanceReport {
  double median = 0.0;
  std::vector<std::string> minority_classes;  // processing order
  std::size_t passes = 0;
};

inline double median_count(const std::map<std::string, std::size_t>& counts) {
  std::vector<std::size_t> v;
  for (const auto& [k, c] : counts) v.push_back(c);
  std::sort(v.begin(), v.end());
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? static_cast<double>(v[mid]) : 0.5 * static_cast<double>(v[mid - 1] + v[mid]);
}

// Oversamples every class below the median class count, largest deficit
// first, one paraphrase per DANGER instance per pass. Passes repeat until all
// such classes reach the median, a pass adds nothing, or max_passes is hit.
inline GeneratedSamples balance_minorities(const LabeledSet& labeled, const ParaphraseProvider& provider,
                                           const LabelChecker* checker, RecordId& next_id, const BalanceOptions& opts,
                                           BalanceReport* report = nullptr) {
  labeled.validate();
  LabeledSet t = labeled;
  const auto counts = t.class_counts();
  const double median = median_count(counts);
  std::vector<std::pair<std::string, double>> minority;
  for (const auto& [name, c] : counts)
    if (static_cast<double>(c) < median) minority.emplace_back(name, median - static_cast<double>(c));
  std::stable_sort(minority.begin(), minority.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  BalanceReport rep;
  rep.median = median;
  for (const auto& [name, deficit] : minority) rep.minority_classes.push_back(name);

  GeneratedSamples out;
  out.x = Matrix(0, t.x.cols());
  const auto target = static_cast<std::size_t>(std::ceil(median));
  for (std::size_t pass = 0; pass < opts.max_passes && !minority.empty(); ++pass) {
    std::size_t added = 0;
    for (const auto& [name, deficit] : minority) {
      const std::size_t have = t.class_counts()[name];
      if (have >= target) continue;
      auto gen = oversample_paraphrase(t, name, opts.m, provider, opts.mode, checker, next_id, opts.call, pass);
      // Keep at most what the class still lacks; ids of dropped rows are released.
      const std::size_t keep = std::min(gen.records.size(), target - have);
      if (keep < gen.records.size()) {
        next_id -= static_cast<RecordId>(gen.records.size() - keep);
        gen.records.resize(keep);
        std::vector<std::size_t> first(keep);
        std::iota(first.begin(), first.end(), std::size_t{0});
        gen.x = gen.x.select_rows(first);
      }
      for (std::size_t i = 0; i < gen.records.size(); ++i) t.append(gen.records[i], gen.x.row(i));
      added += gen.records.size();
      out.append(std::move(gen));
    }
    rep.passes = pass + 1;
    if (added == 0) break;
  }
  if (report) *report = rep;
  return out;
}

}  // namespace ilab
