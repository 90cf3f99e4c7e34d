#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "idla/idla.hpp"
#include "idla/stats.hpp"
#include "support.hpp"

using namespace idla;

TEST(GrowIdla, EmptyAndSingle) {
  EXPECT_EQ(grow_idla<2>(0, 1).size(), 0u);
  const auto one = grow_idla<3>(1, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_TRUE(one.contains(Point<3>{}));
  EXPECT_EQ(one.settles[0].time, 0u);
}

TEST(GrowIdla, SecondExplorerUniformOnNeighbors) {
  const int runs = 100000;
  std::map<Point<2>, int> counts;
  for (int s = 0; s < runs; ++s) {
    const auto c = grow_idla<2>(2, static_cast<std::uint64_t>(s));
    ASSERT_EQ(c.settles[1].time, 1u);
    ++counts[c.settles[1].site];
  }
  ASSERT_EQ(counts.size(), 4u);
  const double sigma = std::sqrt(runs * 0.25 * 0.75);
  for (const auto& [site, c] : counts) {
    EXPECT_EQ(norm2(site), 1);
    EXPECT_LT(std::abs(c - runs * 0.25), 4 * sigma) << to_string(site);
  }
}

TEST(GrowIdla, ClusterInvariants) {
  for (auto engine : {Engine::kStep, Engine::kJump}) {
    const auto c = grow_idla<2>(400, 5, {engine});
    ASSERT_EQ(c.size(), 400u);
    ASSERT_EQ(c.settles.size(), 400u);
    Region<2> prefix;
    for (std::size_t k = 0; k < c.settles.size(); ++k) {
      EXPECT_EQ(c.settles[k].explorer, k);
      // Settles outside the previous cluster, next to it (or at 0).
      EXPECT_TRUE(prefix.insert(c.settles[k].site));
      if (k > 0) {
        bool adjacent = false;
        for (unsigned e = 0; e < 4; ++e) adjacent = adjacent || prefix.contains(neighbor(c.settles[k].site, e));
        EXPECT_TRUE(adjacent);
      }
    }
    EXPECT_TRUE(c.contains(Point<2>{}));
  }
}

TEST(GrowIdla, SeedReplay) {
  const auto a = grow_idla<3>(300, 11, {Engine::kJump});
  const auto b = grow_idla<3>(300, 11, {Engine::kJump});
  for (std::size_t k = 0; k < a.settles.size(); ++k) {
    EXPECT_EQ(a.settles[k].site, b.settles[k].site);
    EXPECT_EQ(a.settles[k].time, b.settles[k].time);
  }
}

TEST(GrowIdla, StepCap) {
  EXPECT_THROW(grow_idla<2>(50, 1, {Engine::kStep, 3}), StepCapExceeded);
}

TEST(GrowIdlaWaves, SingleExplorerAndNoRadii) {
  const auto one = grow_idla_waves<2>(1, {3.0}, 4);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_TRUE(one.contains(Point<2>{}));
  for (auto engine : {Engine::kStep, Engine::kJump}) {
    const auto a = grow_idla<2>(500, 8, {engine});
    const auto b = grow_idla_waves<2>(500, {}, 8, {engine});
    ASSERT_EQ(a.settles.size(), b.settles.size());
    for (std::size_t k = 0; k < a.settles.size(); ++k) EXPECT_EQ(a.settles[k].site, b.settles[k].site);
  }
}

TEST(GrowIdlaWaves, RejectsUnsortedRadii) {
  EXPECT_THROW(grow_idla_waves<2>(10, {3.0, 2.0}, 1), ConfigError);
}

namespace {

template <typename Builder1, typename Builder2>
TestResult compare_laws(Builder1&& first, Builder2&& second, int runs) {
  test_support::SiteIndex<2> index;
  std::vector<std::vector<std::int32_t>> a, b;
  for (int s = 0; s < runs; ++s) {
    a.push_back(index.indices(first(static_cast<std::uint64_t>(s))));
    b.push_back(index.indices(second(static_cast<std::uint64_t>(s + runs))));
  }
  return two_sample_occupation_test(a, b, index.size(), 99);
}

}  // namespace

TEST(GrowIdlaWaves, SameLawAsSequential) {
  const auto r = compare_laws([](std::uint64_t s) { return grow_idla<2>(50, s).occupied; },
                              [](std::uint64_t s) { return grow_idla_waves<2>(50, {1.5, 2.5, 3.5}, s).occupied; },
                              2000);
  EXPECT_GT(r.p_value, 0.001) << "statistic " << r.statistic;
}

TEST(GrowIdla, JumpEngineHasTheStepLaw) {
  const auto r = compare_laws([](std::uint64_t s) { return grow_idla<2>(50, s, {Engine::kStep}).occupied; },
                              [](std::uint64_t s) { return grow_idla<2>(50, s, {Engine::kJump}).occupied; }, 2000);
  EXPECT_GT(r.p_value, 0.001) << "statistic " << r.statistic;
}

TEST(OccupationTest, DetectsADifferentLaw) {
  // 50 versus 56 explorers: the extra sites must be visible.
  const auto r = compare_laws([](std::uint64_t s) { return grow_idla<2>(50, s).occupied; },
                              [](std::uint64_t s) { return grow_idla<2>(56, s).occupied; }, 2000);
  EXPECT_LT(r.p_value, 0.001);
}

TEST(MeasureErrors, PerfectBall) {
  const double n = 10;
  const auto ball = enumerate_ball<2>({}, n);
  const auto r = measure_errors(ball, n);
  EXPECT_EQ(r.delta_outer, 0.0);
  // The first uncovered site is the nearest lattice point at norm >= 10.
  EXPECT_DOUBLE_EQ(r.delta_inner, 0.0);  // (10, 0) and (6, 8) lie at norm 10 exactly
  EXPECT_EQ(r.explorers, ball_size<2>(n));
  const auto r2 = measure_errors(enumerate_ball<2>({}, 10.5), 10.5);
  EXPECT_NEAR(r2.delta_inner, 10.5 - std::sqrt(113.0), 1e-12);  // (8, 7)
}

TEST(MeasureErrors, SwappedBoundarySite) {
  const double n = 10;
  const auto ball = enumerate_ball<2>({}, n);
  const auto order = sites_by_norm<2>(n);
  const auto removed = order.back();
  Region<2> cluster;
  for (const auto& p : ball)
    if (p != removed) cluster.insert(p);
  cluster.insert(Point<2>{{11, 0}});
  const auto r = measure_errors(cluster, n);
  EXPECT_GT(r.delta_outer, 0.0);
  EXPECT_LE(r.delta_outer, 2.0);
  EXPECT_DOUBLE_EQ(r.delta_outer, 1.0);
  EXPECT_GT(r.delta_inner, 0.0);
  EXPECT_LE(r.delta_inner, 1.0);
  EXPECT_DOUBLE_EQ(r.delta_inner, n - norm(removed));
}

TEST(MeasureErrors, SizeMismatch) {
  EXPECT_THROW(measure_errors(enumerate_ball<2>({}, 5), 6), ConfigError);
}

TEST(MeasureErrors, RangeOnSimulatedClusters) {
  const double n = 20;
  const auto N = static_cast<std::size_t>(ball_size<2>(n));
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto r = measure_errors(grow_idla<2>(N, s, {Engine::kJump}), n, s);
    EXPECT_LE(r.delta_inner, n);
    EXPECT_GE(r.delta_outer, 0.0);
    EXPECT_LT(r.delta_inner, 6.0);
    EXPECT_LT(r.delta_outer, 6.0);
  }
}
