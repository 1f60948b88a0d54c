#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "ilab/polygon.hpp"
#include "oracles.hpp"

using namespace ilab;

namespace {

const Polygon unit_square = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};

Matrix pts(std::initializer_list<Vertex> v) {
  Matrix m(v.size(), 2);
  std::size_t r = 0;
  for (const auto& [x, y] : v) {
    m(r, 0) = x;
    m(r, 1) = y;
    ++r;
  }
  return m;
}

}  // namespace

TEST(PointsInPolygon, UnitSquare) {
  EXPECT_EQ(points_in_polygon(pts({{0.5, 0.5}, {2, 2}}), unit_square), (std::vector<std::int64_t>{0}));
}

TEST(PointsInPolygon, BoundaryCountsAsInside) {
  const auto m = pts({{1.0, 0.5}, {0, 0}, {0.5, 1.0}, {1, 1}, {0, 0.25}, {1.0000001, 0.5}, {-1e-9, 0.5}});
  EXPECT_EQ(points_in_polygon(m, unit_square), (std::vector<std::int64_t>{0, 1, 2, 3, 4}));
}

TEST(PointsInPolygon, ResultSortedAndWindingAgnostic) {
  const Polygon cw(unit_square.rbegin(), unit_square.rend());
  const auto m = pts({{0.9, 0.9}, {0.1, 0.1}, {5, 5}, {0.5, 0.2}});
  EXPECT_EQ(points_in_polygon(m, unit_square), (std::vector<std::int64_t>{0, 1, 3}));
  EXPECT_EQ(points_in_polygon(m, cw), (std::vector<std::int64_t>{0, 1, 3}));
}

TEST(PointsInPolygon, ConcavePolygon) {
  // U shape: the notch between x in (1, 2) above y = 1 is outside.
  const Polygon u = {{0, 0}, {3, 0}, {3, 3}, {2, 3}, {2, 1}, {1, 1}, {1, 3}, {0, 3}};
  const auto m = pts({{0.5, 2.5}, {1.5, 2.0}, {2.5, 2.5}, {1.5, 0.5}, {1.5, 1.0}});
  EXPECT_EQ(points_in_polygon(m, u), (std::vector<std::int64_t>{0, 2, 3, 4}));
}

TEST(PointsInPolygon, ClosingVertexRepeatIsAccepted) {
  Polygon closed = unit_square;
  closed.push_back(closed.front());
  EXPECT_EQ(points_in_polygon(pts({{0.5, 0.5}}), closed).size(), 1u);
}

TEST(PointsInPolygon, RejectsDegenerate) {
  const auto m = pts({{0.5, 0.5}});
  EXPECT_THROW(points_in_polygon(m, {{0, 0}, {1, 1}}), Error);
  EXPECT_THROW(points_in_polygon(m, {{0, 0}, {1, 1}, {2, 2}}), Error);
  EXPECT_THROW(points_in_polygon(m, {{0, 0}, {1, 0}, {1, 0}, {0, 0}}), Error);
  try {
    points_in_polygon(m, {{0, 0}, {1, 1}, {2, 2}});
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate);
    EXPECT_NE(std::string(e.what()).find("zero area"), std::string::npos);
  }
}

TEST(PointsInPolygon, RejectsSelfIntersecting) {
  const auto m = pts({{0.5, 0.5}});
  // Bow tie.
  EXPECT_THROW(points_in_polygon(m, {{0, 0}, {1, 1}, {1, 0}, {0, 1}}), Error);
  // Pentagram.
  Polygon star;
  for (int i = 0; i < 5; ++i) {
    const double a = 2 * std::numbers::pi * (2 * i) / 5.0;
    star.emplace_back(std::cos(a), std::sin(a));
  }
  EXPECT_THROW(points_in_polygon(m, star), Error);
  // Spike folding back on itself.
  EXPECT_THROW(points_in_polygon(m, {{0, 0}, {2, 0}, {1, 0}, {1, 1}}), Error);
}

TEST(PointsInPolygon, RejectsNonFiniteAndBadShape) {
  EXPECT_THROW(points_in_polygon(pts({{0, 0}}), {{0, 0}, {1, 0}, {std::nan(""), 1}}), Error);
  EXPECT_THROW(points_in_polygon(Matrix(3, 3), unit_square), Error);
}

TEST(PointsInPolygon, AgreesWithWindingNumberOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const auto poly = fixture::random_star_polygon(rng, 7);
    Matrix m(200, 2);
    for (auto& v : m.data()) v = 6.0 * rng.uniform() - 3.0;
    std::vector<std::int64_t> expected;
    for (std::size_t r = 0; r < 200; ++r)
      if (oracle::winding_number(m(r, 0), m(r, 1), poly) != 0) expected.push_back(static_cast<std::int64_t>(r));
    EXPECT_EQ(points_in_polygon(m, poly), expected) << "trial " << trial;
  }
}

TEST(PointsInPolygon, StarPolygonsAreSimple) {
  Rng rng(7);
  for (int i = 0; i < 500; ++i) EXPECT_NO_THROW(validate_polygon(fixture::random_star_polygon(rng, 3 + i % 10)));
}
