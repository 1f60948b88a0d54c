#pragma once

// Polygon selection over 2D coordinates: even-odd ray casting with points on
// the boundary counted as inside.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "ilab/error.hpp"
#include "ilab/matrix.hpp"

namespace ilab {

using Vertex = std::pair<double, double>;
using Polygon = std::vector<Vertex>;

namespace detail {

inline double cross(const Vertex& o, const Vertex& a, const Vertex& b) {
  return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
}

inline int orientation(const Vertex& o, const Vertex& a, const Vertex& b) {
  const double c = cross(o, a, b);
  return (c > 0) - (c < 0);
}

// p known collinear with segment ab.
inline bool within_box(const Vertex& a, const Vertex& b, const Vertex& p) {
  return std::min(a.first, b.first) <= p.first && p.first <= std::max(a.first, b.first) &&
         std::min(a.second, b.second) <= p.second && p.second <= std::max(a.second, b.second);
}

inline bool on_segment(const Vertex& a, const Vertex& b, const Vertex& p) {
  return orientation(a, b, p) == 0 && within_box(a, b, p);
}

inline bool segments_intersect(const Vertex& p1, const Vertex& p2, const Vertex& q1, const Vertex& q2) {
  const int o1 = orientation(p1, p2, q1), o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1), o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4 && o1 * o2 <= 0 && o3 * o4 <= 0) return true;
  if (o1 == 0 && within_box(p1, p2, q1)) return true;
  if (o2 == 0 && within_box(p1, p2, q2)) return true;
  if (o3 == 0 && within_box(q1, q2, p1)) return true;
  if (o4 == 0 && within_box(q1, q2, p2)) return true;
  return false;
}

}  // namespace detail

inline double signed_area(const Polygon& poly) {
  double a = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    a += p.first * q.second - q.first * p.second;
  }
  return 0.5 * a;
}

// Drops a repeated closing vertex and consecutive duplicates, then checks the
// polygon is usable: >= 3 vertices, finite, non-zero area, simple.
inline Polygon validate_polygon(Polygon poly) {
  for (const auto& [x, y] : poly)
    if (!std::isfinite(x) || !std::isfinite(y)) throw Error(Errc::non_finite, "polygon has a non-finite vertex");
  poly.erase(std::unique(poly.begin(), poly.end()), poly.end());
  while (poly.size() > 1 && poly.front() == poly.back()) poly.pop_back();
  if (poly.size() < 3) throw Error(Errc::degenerate, "degenerate polygon: fewer than 3 distinct vertices");
  if (signed_area(poly) == 0.0) throw Error(Errc::degenerate, "degenerate polygon: zero area");

  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& c = poly[j];
      const auto& d = poly[(j + 1) % n];
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) {
        // Shared endpoint is fine; folding back along the same line is not.
        const Vertex& shared = j == i + 1 ? b : a;
        const Vertex& other_ab = j == i + 1 ? a : b;
        const Vertex& other_cd = j == i + 1 ? d : c;
        if (detail::orientation(shared, other_ab, other_cd) == 0 &&
            (detail::on_segment(shared, other_ab, other_cd) || detail::on_segment(shared, other_cd, other_ab)))
          throw Error(Errc::degenerate, "self-intersecting polygon");
        continue;
      }
      if (detail::segments_intersect(a, b, c, d)) throw Error(Errc::degenerate, "self-intersecting polygon");
    }
  }
  return poly;
}

inline bool point_in_polygon(const Vertex& p, const Polygon& poly) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if (detail::on_segment(a, b, p)) return true;
    if ((a.second > p.second) != (b.second > p.second)) {
      const double x = a.first + (p.second - a.second) * (b.first - a.first) / (b.second - a.second);
      if (p.first < x) inside = !inside;
    }
  }
  return inside;
}

// Row indices of `coords` (rows x 2) inside the polygon, ascending.
inline std::vector<std::int64_t> points_in_polygon(const Matrix& coords, const Polygon& polygon) {
  if (coords.cols() != 2) throw Error(Errc::invalid_argument, "points_in_polygon: coords must have 2 columns");
  const auto poly = validate_polygon(polygon);
  std::vector<std::int64_t> out;
  for (std::size_t r = 0; r < coords.rows(); ++r)
    if (point_in_polygon({coords(r, 0), coords(r, 1)}, poly)) out.push_back(static_cast<std::int64_t>(r));
  return out;
}

}  // namespace ilab
