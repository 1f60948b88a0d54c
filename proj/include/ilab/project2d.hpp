#pragma once

// 2D projections for the labeling UI: native PCA, or coordinates computed
// elsewhere and dropped in as an EMB1 file with dim 2.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ilab/emb_file.hpp"
#include "ilab/error.hpp"
#include "ilab/matrix.hpp"

namespace ilab {

enum class ProjectionMethod { pca, external };

inline std::string_view projection_method_name(ProjectionMethod m) {
  return m == ProjectionMethod::pca ? "pca" : "external";
}

struct ProjectionCoords {
  Matrix coords;  // rows x 2
  ProjectionMethod method = ProjectionMethod::pca;
  std::uint32_t source_checksum = 0;
};

struct PcaModel {
  std::vector<double> mean;
  Matrix axes;  // 2 x dim, orthonormal rows
  double eigenvalues[2] = {0.0, 0.0};
  double total_variance = 0.0;

  [[nodiscard]] double captured_fraction() const {
    return total_variance > 0 ? (eigenvalues[0] + eigenvalues[1]) / total_variance : 0.0;
  }
};

struct PowerIterationOptions {
  double tol = 1e-9;
  std::size_t max_iter = 1000;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline bool normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (!(n > 0)) return false;
  for (auto& x : v) x /= n;
  return true;
}

inline void orthogonalize(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  for (const auto& b : basis) {
    const double p = dot(v, b);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * b[i];
  }
}

// First nonzero loading positive.
inline void fix_sign(std::vector<double>& v) {
  for (double x : v) {
    if (std::abs(x) > 1e-12) {
      if (x < 0)
        for (auto& y : v) y = -y;
      return;
    }
  }
}

}  // namespace detail

// Top-2 eigenpairs of the sample covariance by power iteration; the second
// axis is found on the covariance deflated by the first.
inline PcaModel fit_pca2d(const Matrix& x, const PowerIterationOptions& opts = {}) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 2) throw Error(Errc::invalid_argument, "pca2d: need at least 2 rows");
  if (d < 2) throw Error(Errc::invalid_argument, "pca2d: need dim >= 2");
  if (!x.all_finite()) throw Error(Errc::non_finite, "pca2d: non-finite input");

  PcaModel m;
  m.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) m.mean[c] += x(r, c);
  for (auto& v : m.mean) v /= static_cast<double>(n);

  Matrix cov(d, d);
  std::vector<double> row(d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) row[c] = x(r, c) - m.mean[c];
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b) cov(a, b) += row[a] * row[b];
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) /= static_cast<double>(n - 1);
      cov(b, a) = cov(a, b);
    }
  for (std::size_t a = 0; a < d; ++a) m.total_variance += cov(a, a);
  if (!(m.total_variance > 0)) throw Error(Errc::degenerate, "pca2d: zero-variance input");

  const double scale = m.total_variance;
  std::vector<std::vector<double>> axes;
  std::vector<double> w(d);
  for (int k = 0; k < 2; ++k) {
    // Deterministic start with no special symmetry.
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = 1.0 + 0.1 * static_cast<double>((i * 7919 + 13 * k) % 101) / 101.0;
    detail::orthogonalize(v, axes);
    detail::normalize(v);
    double lambda = 0;
    for (std::size_t it = 0; it < opts.max_iter; ++it) {
      for (std::size_t a = 0; a < d; ++a) w[a] = detail::dot(cov.row(a), v);
      detail::orthogonalize(w, axes);  // deflation
      lambda = detail::dot(v, w);
      if (!detail::normalize(w)) break;  // remaining spectrum is zero; keep v
      double diff = 0;
      for (std::size_t i = 0; i < d; ++i) diff = std::max(diff, std::abs(w[i] - v[i]));
      v.swap(w);
      if (diff < opts.tol) break;
    }
    if (std::abs(lambda) <= 1e-15 * scale) lambda = 0.0;
    detail::fix_sign(v);
    m.eigenvalues[k] = lambda;
    axes.push_back(std::move(v));
  }
  m.axes = Matrix(2, d);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t c = 0; c < d; ++c) m.axes(k, c) = axes[k][c];
  return m;
}

inline Matrix pca_transform(const PcaModel& m, const Matrix& x) {
  Matrix out(x.rows(), 2);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t k = 0; k < 2; ++k) {
      double s = 0;
      for (std::size_t c = 0; c < x.cols(); ++c) s += (x(r, c) - m.mean[c]) * m.axes(k, c);
      out(r, k) = s;
    }
  return out;
}

inline ProjectionCoords pca2d(const Matrix& features, const PowerIterationOptions& opts = {}) {
  const auto model = fit_pca2d(features, opts);
  return {pca_transform(model, features), ProjectionMethod::pca, matrix_checksum(features)};
}

inline std::string coords_sidecar_path(const std::string& path) { return path + ".meta.json"; }

// Writes coords as EMB1 plus a sidecar recording the source checksum.
inline void write_coords(const std::string& path, const ProjectionCoords& p) {
  write_emb1(path, p.coords);
  nlohmann::ordered_json j;
  j["method"] = std::string(projection_method_name(p.method));
  j["source_checksum"] = p.source_checksum;
  write_file_bytes(coords_sidecar_path(path), j.dump() + "\n");
}

inline ProjectionCoords load_external_coords(const std::string& path, std::size_t expected_rows) {
  Matrix m = read_emb1(path);
  if (m.cols() != 2)
    throw Error(Errc::parse_error, path + ": coordinates must have dim 2, got " + std::to_string(m.cols()));
  if (m.rows() != expected_rows)
    throw Error(Errc::row_count_mismatch, path + ": row mismatch (" + std::to_string(m.rows()) + " coords, " +
                                              std::to_string(expected_rows) + " corpus rows)");
  ProjectionCoords p{std::move(m), ProjectionMethod::external, 0};
  const auto side = coords_sidecar_path(path);
  if (std::filesystem::exists(side)) {
    try {
      auto j = nlohmann::json::parse(read_file_bytes(side));
      p.source_checksum = j.at("source_checksum").get<std::uint32_t>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse_error, side + ": " + e.what());
    }
  }
  return p;
}

}  // namespace ilab
