#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "ilab/corpus.hpp"
#include "ilab/matrix.hpp"
#include "ilab/rng.hpp"

namespace ilab::fixture {

// Gaussian blobs: `per_blob[b]` points around `centers[b]` with isotropic std.
inline Matrix make_blobs(const std::vector<std::vector<double>>& centers, const std::vector<std::size_t>& per_blob,
                         double stddev, std::uint64_t seed, std::vector<std::size_t>* labels = nullptr) {
  std::size_t total = 0;
  for (auto n : per_blob) total += n;
  const std::size_t dim = centers.front().size();
  Matrix m(total, dim);
  Rng rng(seed);
  std::size_t r = 0;
  for (std::size_t b = 0; b < centers.size(); ++b)
    for (std::size_t i = 0; i < per_blob[b]; ++i, ++r) {
      for (std::size_t d = 0; d < dim; ++d) m(r, d) = centers[b][d] + stddev * rng.normal();
      if (labels) labels->push_back(b);
    }
  return m;
}

// Random well-separated centres in [-spread, spread]^dim.
inline std::vector<std::vector<double>> random_centers(std::size_t k, std::size_t dim, double spread,
                                                       double min_gap, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> out;
  while (out.size() < k) {
    std::vector<double> c(dim);
    for (auto& v : c) v = (2.0 * rng.uniform() - 1.0) * spread;
    bool ok = true;
    for (const auto& o : out)
      if (distance(o, c) < min_gap) ok = false;
    if (ok) out.push_back(std::move(c));
  }
  return out;
}

// Corpus whose records are labeled "c<blob>" and split train.
inline Corpus blob_corpus(const Matrix& x, const std::vector<std::size_t>& labels) {
  std::vector<UtteranceRecord> recs;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    UtteranceRecord r;
    r.id = static_cast<RecordId>(i);
    r.text = "utterance " + std::to_string(i);
    r.gold_label = "c" + std::to_string(labels[i]);
    recs.push_back(std::move(r));
  }
  return make_corpus(std::move(recs), x);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ilab_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] std::string file(const std::string& name) const { return (path_ / name).string(); }
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct DacFixture {
  Corpus corpus;
  std::vector<std::size_t> truth;
};

// Three Gaussian blobs whose centres are at least `gap` apart.
inline DacFixture three_blob_corpus(std::uint64_t seed, std::size_t per_blob = 200, std::size_t dim = 16,
                                    double gap = 8.0, double stddev = 1.0) {
  DacFixture f;
  auto centers = random_centers(3, dim, 6.0, gap, seed * 7919 + 1);
  auto x = make_blobs(centers, {per_blob, per_blob, per_blob}, stddev, seed * 104729 + 3, &f.truth);
  f.corpus = blob_corpus(x, f.truth);
  return f;
}

// Simple polygon: one vertex per angular sector around a random centre.
// Every sector is narrower than pi, so the polygon is star-shaped about the
// centre and its boundary never crosses itself.
inline std::vector<std::pair<double, double>> random_star_polygon(Rng& rng, std::size_t v) {
  const double cx = 4.0 * rng.uniform() - 2.0, cy = 4.0 * rng.uniform() - 2.0;
  const double offset = 2.0 * std::numbers::pi * rng.uniform();
  std::vector<double> angles(v);
  for (std::size_t i = 0; i < v; ++i)
    angles[i] = offset + 2.0 * std::numbers::pi * (static_cast<double>(i) + 0.9 * rng.uniform()) / static_cast<double>(v);
  std::vector<std::pair<double, double>> poly;
  for (double a : angles) {
    const double r = 0.3 + 2.0 * rng.uniform();
    poly.emplace_back(cx + r * std::cos(a), cy + r * std::sin(a));
  }
  return poly;
}

}  // namespace ilab::fixture
