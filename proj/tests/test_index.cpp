#include <gtest/gtest.h>

#include "dynafilter/index.hpp"
#include "dynafilter/rng.hpp"
#include "oracles.hpp"

using namespace dynafilter;

namespace {

std::vector<Vec> random_points(std::size_t n, int dim, Rng& rng, double lo = 0.0,
                               double hi = 1.0) {
  std::vector<Vec> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec x(static_cast<std::size_t>(dim));
    for (auto& v : x) v = rng.uniform(lo, hi);
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace

TEST(ExactIndex, MatchesLinearScan) {
  Rng rng = Rng::derive(1, "pts");
  auto pts = random_points(500, 4, rng);
  ExactIndex index(4);
  for (const auto& p : pts) index.insert(p);
  for (int q = 0; q < 100; ++q) {
    Vec query(4);
    for (auto& v : query) v = rng.uniform(0.0, 1.0);
    NnResult got = index.nearest(query);
    auto [dist, id] = oracle::nn_linear_scan(pts, query);
    EXPECT_EQ(got.id, id);
    EXPECT_DOUBLE_EQ(got.dist, dist);
    EXPECT_EQ(got.visited, pts.size());
  }
}

TEST(ExactIndex, TieBreaksToLowestId) {
  ExactIndex index(1);
  index.insert({1.0});
  index.insert({-1.0});
  index.insert({1.0});
  NnResult r = index.nearest({0.0});
  EXPECT_EQ(r.id, 0u);  // ids 0 and 1 are both at distance 1
}

TEST(ExactIndex, EmptyAndDimChecks) {
  ExactIndex index(2);
  EXPECT_THROW(index.nearest({0.0, 0.0}), EmptyIndexError);
  EXPECT_THROW(index.insert({0.0}), DimensionError);
  index.insert({0.0, 0.0});
  EXPECT_THROW(index.nearest({0.0}), DimensionError);
}

TEST(Hnsw, ConfigValidation) {
  EXPECT_THROW(HnswIndex(2, 1, 10, 10), ConfigError);
  EXPECT_THROW(HnswIndex(2, 16, 0, 10), ConfigError);
  EXPECT_THROW(HnswIndex(2, 16, 10, 0), ConfigError);
}

TEST(Hnsw, EmptyThrows) {
  HnswIndex index(2);
  EXPECT_THROW(index.nearest({0.0, 0.0}), EmptyIndexError);
}

TEST(Hnsw, OneLevelDrawPerInsert) {
  // The level draw is the only randomness; n inserts must consume exactly n
  // uniforms, independent of graph shape.
  Rng rng = Rng::derive(3, "levels");
  Rng ref = Rng::derive(3, "levels");
  HnswIndex index(3);
  Rng data_rng = Rng::derive(3, "pts");
  auto pts = random_points(257, 3, data_rng);
  for (const auto& p : pts) index.insert(p, rng);
  for (std::size_t i = 0; i < pts.size(); ++i) ref.uniform01();
  EXPECT_DOUBLE_EQ(rng.uniform01(), ref.uniform01());
}

TEST(Hnsw, ReportedDistanceIsTrueDistance) {
  Rng rng = Rng::derive(4, "pts");
  auto pts = random_points(300, 5, rng);
  HnswIndex index(5);
  Rng level_rng = Rng::derive(4, "levels");
  for (const auto& p : pts) index.insert(p, level_rng);
  for (int q = 0; q < 50; ++q) {
    Vec query(5);
    for (auto& v : query) v = rng.uniform(0.0, 1.0);
    NnResult r = index.nearest(query);
    EXPECT_DOUBLE_EQ(r.dist, l2_dist(query, pts[r.id]));
  }
}

TEST(Hnsw, NeverCloserThanExact) {
  // The graph may miss the true neighbour but can never report a smaller
  // distance; that is what makes the filter conservative.
  Rng rng = Rng::derive(5, "pts");
  auto pts = random_points(1000, 4, rng);
  HnswIndex hnsw(4);
  ExactIndex exact(4);
  Rng level_rng = Rng::derive(5, "levels");
  for (const auto& p : pts) {
    hnsw.insert(p, level_rng);
    exact.insert(p);
  }
  for (int q = 0; q < 200; ++q) {
    Vec query(4);
    for (auto& v : query) v = rng.uniform(-0.2, 1.2);
    EXPECT_GE(hnsw.nearest(query).dist, exact.nearest(query).dist - 1e-12);
  }
}

TEST(Hnsw, HighRecallAtSmallScale) {
  Rng rng = Rng::derive(6, "pts");
  auto pts = random_points(2000, 8, rng);
  HnswIndex hnsw(8);
  ExactIndex exact(8);
  Rng level_rng = Rng::derive(6, "levels");
  for (const auto& p : pts) {
    hnsw.insert(p, level_rng);
    exact.insert(p);
  }
  int hits = 0;
  const int queries = 300;
  for (int q = 0; q < queries; ++q) {
    Vec query(8);
    for (auto& v : query) v = rng.uniform(0.0, 1.0);
    if (hnsw.nearest(query).dist <= exact.nearest(query).dist * (1.0 + 1e-12)) ++hits;
  }
  EXPECT_GE(hits, static_cast<int>(queries * 0.9));
}

TEST(Hnsw, ExactOnInsertedPoints) {
  // Querying an inserted point must find distance zero; entry points are
  // reachable from every layer.
  Rng rng = Rng::derive(7, "pts");
  auto pts = random_points(400, 3, rng);
  HnswIndex index(3);
  Rng level_rng = Rng::derive(7, "levels");
  for (const auto& p : pts) index.insert(p, level_rng);
  for (std::size_t i = 0; i < pts.size(); i += 13)
    EXPECT_DOUBLE_EQ(index.nearest(pts[i]).dist, 0.0);
}

TEST(Hnsw, DuplicatePointsAreHandled) {
  HnswIndex index(2);
  Rng level_rng = Rng::derive(8, "levels");
  for (int i = 0; i < 20; ++i) index.insert({0.5, 0.5}, level_rng);
  index.insert({0.9, 0.9}, level_rng);
  NnResult r = index.nearest({0.45, 0.5});
  EXPECT_NEAR(r.dist, 0.05, 1e-12);
}

TEST(Hnsw, SizeTracksInserts) {
  HnswIndex index(1);
  Rng level_rng = Rng::derive(9, "levels");
  EXPECT_EQ(index.size(), 0u);
  index.insert({1.0}, level_rng);
  index.insert({2.0}, level_rng);
  EXPECT_EQ(index.size(), 2u);
}
