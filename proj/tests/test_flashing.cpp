#include <gtest/gtest.h>

#include <cmath>
#include <iostream>
#include <map>

#include "idla/flashing.hpp"
#include "idla/stats.hpp"

using namespace idla;

TEST(ShellPartition, ConstantFiveCenters) {
  const auto p = ShellPartition::from_widths({5}, 40);
  EXPECT_DOUBLE_EQ(p.center(1), 10);
  EXPECT_DOUBLE_EQ(p.center(2), 20);
  EXPECT_DOUBLE_EQ(p.center(3), 30);
  EXPECT_DOUBLE_EQ(p.inner(2), 15);
  EXPECT_DOUBLE_EQ(p.outer(2), 25);
  EXPECT_THROW(p.require_flashing_widths(), ConfigError);
}

TEST(ShellPartition, ShellOfAPoint) {
  const auto p = ShellPartition::constant(16, 100);
  EXPECT_DOUBLE_EQ(p.center(1), 32);
  EXPECT_DOUBLE_EQ(p.center(2), 64);
  EXPECT_EQ(p.shell_of(Point<2>{{0, 40}}), 1u);
  EXPECT_EQ(p.shell_of(Point<2>{{0, 15}}), 0u);
  EXPECT_EQ(p.shell_of(Point<2>{{0, 16}}), 1u);
  EXPECT_EQ(p.shell_of(Point<2>{{0, 48}}), 2u);
  EXPECT_GE(p.outer(p.shells_within() - 1), 100.0);
  EXPECT_EQ(p.shell_cap(), 4 * p.shells_within() + 64);
}

TEST(ShellPartition, Admissibility) {
  EXPECT_NO_THROW(ShellPartition::from_widths({16, 16, 24, 24 * (1 + 1.0 / 4)}, 200));
  EXPECT_THROW(ShellPartition::from_widths({16, 16, 32}, 200), ConfigError);
  EXPECT_THROW(ShellPartition::from_widths({16, 16, 15}, 200), ConfigError);
  EXPECT_THROW(ShellPartition::from_widths({}, 200), ConfigError);
  EXPECT_THROW(ShellPartition::from_widths({16}, 0), ConfigError);
}

TEST(ShellPartition, ShellsTileTheLattice) {
  const auto p = ShellPartition::from_widths({16, 16, 20, 24}, 150);
  EXPECT_DOUBLE_EQ(p.center(2), p.center(1) + 16 + 20);
  for (std::size_t j = 1; j + 1 < p.tabulated(); ++j) EXPECT_DOUBLE_EQ(p.outer(j), p.inner(j + 1));
  for (const auto& z : enumerate_ball<2>({}, 150)) {
    int count = 0;
    for (std::size_t j = 0; j < 8; ++j) count += p.in_shell(z, j);
    ASSERT_EQ(count, 1) << to_string(z);
    EXPECT_TRUE(p.in_shell(z, p.shell_of(z)));
  }
}

TEST(Cone, ExactTestAgreesWithGeometry) {
  RandomStream rng(1, 2);
  int disagreements = 0, checked = 0;
  for (int i = 0; i < 200000; ++i) {
    Point<2> a{{static_cast<std::int32_t>(rng.below(81)) - 40, static_cast<std::int32_t>(rng.below(81)) - 40}};
    Point<2> x{{static_cast<std::int32_t>(rng.below(81)) - 40, static_cast<std::int32_t>(rng.below(81)) - 40}};
    if (norm2(a) <= 64 || is_origin(x)) continue;
    // Distance from a to the ray through x.
    const double t = std::max(0.0, static_cast<double>(dot(a, x)) / static_cast<double>(norm2(x)));
    const double dx = a[0] - t * x[0], dy = a[1] - t * x[1];
    const double dist = std::hypot(dx, dy);
    if (std::abs(dist - 8) < 1e-9) continue;
    ++checked;
    disagreements += in_cone(a, x, 8.0) != (dist < 8);
  }
  EXPECT_GT(checked, 100000);
  EXPECT_EQ(disagreements, 0);
}

TEST(Cell, ShellZeroIsTheWholeBall) {
  const auto p = ShellPartition::constant(16, 50);
  for (const auto& z : enumerate_ball<2>({}, 16)) EXPECT_TRUE(in_cell(p, 0, Point<2>{}, z));
  EXPECT_FALSE(in_cell(p, 0, Point<2>{}, Point<2>{{16, 0}}));
  // Shell 1 cells are cone pieces.
  const Point<2> anchor{{32, 0}};
  EXPECT_TRUE(in_cell(p, 1, anchor, Point<2>{{40, 5}}));
  EXPECT_FALSE(in_cell(p, 1, anchor, Point<2>{{30, 12}}));
  EXPECT_FALSE(in_cell(p, 1, anchor, Point<2>{{-32, 0}}));
  EXPECT_FALSE(in_cell(p, 1, anchor, Point<2>{{50, 0}}));
}

TEST(FlashDraw, Frequencies) {
  const int n = 400000;
  int x = 0, y = 0;
  for (int i = 0; i < n; ++i) {
    auto s = flash_stream(3, static_cast<std::uint64_t>(i), 1);
    const auto f = draw_flash(s, 1, 16, 2);
    x += f.x;
    y += f.y;
    EXPECT_EQ(s.draws(), 3u);
    auto s0 = flash_stream(3, static_cast<std::uint64_t>(i), 0);
    EXPECT_TRUE(draw_flash(s0, 0, 16, 2).y);
  }
  const double px = 1.0 / 256;
  EXPECT_LT(std::abs(x - n * px), 4 * std::sqrt(n * px * (1 - px)));
  EXPECT_LT(std::abs(y - n * 0.5), 4 * std::sqrt(n * 0.25));
}

TEST(FlashDraw, RadiusHasPowerLaw) {
  for (int d : {2, 3}) {
    std::vector<double> u;
    for (int i = 0; i < 100000; ++i) {
      auto s = flash_stream(5, static_cast<std::uint64_t>(i), 2);
      const auto f = draw_flash(s, 2, 20, d);
      ASSERT_GT(f.r, 0.0);
      ASSERT_LT(f.r, 20.0);
      u.push_back(f.r / 20);
    }
    EXPECT_GT(ks_test(u, [d](double v) { return std::pow(v, d); }).p_value, 0.001) << "d=" << d;
  }
}

TEST(FlashStop, CasesOfTheStoppingRule) {
  const auto p = ShellPartition::constant(16, 100);
  const Point<2> z{{32, 0}};
  RandomStream walk(1, 1);
  const auto immediate = flash_stop(p, 1, z, FlashDraw{true, true, 5}, walk);
  EXPECT_EQ(immediate.stop, z);
  EXPECT_TRUE(immediate.flashed);
  EXPECT_EQ(walk.draws(), 0u);

  for (int i = 0; i < 2000; ++i) {
    RandomStream w(2, static_cast<std::uint64_t>(i));
    const double r = 1 + 14.0 * i / 2000;
    const auto ball = flash_stop(p, 1, z, FlashDraw{false, true, r}, w);
    EXPECT_FALSE(norm2_below(norm2(ball.stop - z), r));
    EXPECT_TRUE(norm2_below(norm2(ball.stop - z), r + 1));
    EXPECT_EQ(ball.flashed, in_cell(p, 1, z, ball.stop));
    const auto ring = flash_stop(p, 1, z, FlashDraw{false, false, r}, w);
    const double nr = norm(ring.stop);
    EXPECT_TRUE(nr >= 32 + r || nr < 32 - r);
    EXPECT_TRUE(nr < 32 + r + 1 && nr >= 32 - r - 1);
    EXPECT_EQ(ring.flashed, in_cell(p, 1, z, ring.stop));
  }
}

TEST(FlashStop, BallIsTruncatedAtTheShell) {
  // An entry point beyond r_j: radius R is capped at r_j + h_j - |z_j|.
  const auto p = ShellPartition::constant(16, 100);
  const Point<2> z{{32, 1}};
  for (int i = 0; i < 500; ++i) {
    RandomStream w(4, static_cast<std::uint64_t>(i));
    const auto ev = flash_stop(p, 1, z, FlashDraw{false, true, 15.99}, w);
    EXPECT_LT(norm(ev.stop), 48.0 + 1);
    EXPECT_GE(norm(ev.stop - z), 48.0 - norm(z));
  }
}

TEST(FlashStop, JumpEngineHasTheStepLaw) {
  const auto p = ShellPartition::constant(16, 100);
  const Point<2> z{{32, 0}};
  std::map<Point<2>, double> step, jump;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    auto ds = flash_stream(8, static_cast<std::uint64_t>(i), 1);
    const auto draw = draw_flash(ds, 1, 16, 2);
    RandomStream w1(9, static_cast<std::uint64_t>(i)), w2(10, static_cast<std::uint64_t>(i));
    step[flash_stop(p, 1, z, draw, w1, Engine::kStep).stop] += 1;
    jump[flash_stop(p, 1, z, draw, w2, Engine::kJump).stop] += 1;
  }
  // Per-site chi-squared homogeneity statistic, sparse cells pooled.
  double stat = 0;
  int cells = 0;
  std::map<Point<2>, double> all = step;
  for (const auto& [k, v] : jump) all[k] += v;
  double pooled_small = 0, small_s = 0;
  for (const auto& [k, tot] : all) {
    const double s = step.count(k) ? step[k] : 0.0;
    if (tot < 20) {
      pooled_small += tot;
      small_s += s;
      continue;
    }
    const double e = tot / 2;
    stat += 2 * (s - e) * (s - e) / e;
    ++cells;
  }
  if (pooled_small > 0) {
    const double e = pooled_small / 2;
    stat += 2 * (small_s - e) * (small_s - e) / e;
    ++cells;
  }
  EXPECT_GT(chi_square_upper_tail(stat, cells - 1), 0.001) << stat << " on " << cells - 1;
}

namespace {

template <int D>
void check_history(const FlashCluster<D>& c, const ShellPartition& p, std::size_t n) {
  ASSERT_EQ(c.size(), n);
  ASSERT_EQ(c.settles.size(), n);
  std::vector<int> settled(n, 0);
  std::vector<std::int64_t> last_shell(n, -1);
  for (const auto& e : c.history) {
    // One flashing time per (explorer, shell), in shell order.
    EXPECT_GT(static_cast<std::int64_t>(e.shell), last_shell[e.explorer]);
    last_shell[e.explorer] = e.shell;
    EXPECT_EQ(settled[e.explorer], 0) << "event after settling";
    EXPECT_EQ(e.flashed, in_cell(p, e.shell, e.entry, e.stop));
    if (e.shell > 0) {
      EXPECT_FALSE(norm2_below(norm2(e.entry), p.center(e.shell)));
      bool inside = false;
      for (unsigned k = 0; k < kNeighborCount<D>; ++k) inside = inside || norm2_below(norm2(neighbor(e.entry, k)), p.center(e.shell));
      EXPECT_TRUE(inside);
    } else {
      EXPECT_TRUE(is_origin(e.entry));
    }
    if (e.settled) {
      EXPECT_TRUE(e.flashed);
      EXPECT_TRUE(c.occupied.contains(e.stop));
      EXPECT_TRUE(p.in_shell(e.stop, e.shell));
      settled[e.explorer] = 1;
    }
  }
  for (std::size_t k = 0; k < n; ++k) EXPECT_EQ(settled[k], 1);
}

}  // namespace

TEST(GrowFlashing, SingleExplorer) {
  const auto p = ShellPartition::constant(16, 20);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto c = grow_flashing<2>(1, p, s);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c.history.front().shell, 0u);
    EXPECT_TRUE(c.history.back().settled);
    // The first flash always settles (the cluster is empty).
    for (std::size_t i = 0; i + 1 < c.history.size(); ++i) EXPECT_FALSE(c.history[i].flashed);
  }
}

TEST(GrowFlashing, HistoryInvariants) {
  const auto p = ShellPartition::constant(16, 30);
  const auto n = static_cast<std::size_t>(ball_size<2>(30));
  for (auto engine : {Engine::kStep, Engine::kJump}) {
    const auto c = grow_flashing<2>(n, p, 21, {engine});
    check_history(c, p, n);
    const auto r = measure_flash_errors(c, 30);
    EXPECT_TRUE(std::isfinite(r.delta_inner));
    EXPECT_TRUE(std::isfinite(r.delta_outer));
  }
  const auto c3 = grow_flashing<3>(2000, ShellPartition::constant(16, 12), 2, {Engine::kJump});
  check_history(c3, ShellPartition::constant(16, 12), 2000);
}

TEST(GrowFlashing, RequiresWideShells) {
  EXPECT_THROW(grow_flashing<2>(5, ShellPartition::constant(8, 30), 1), ConfigError);
}

TEST(GrowFlashing, ShellCap) {
  // With max radius 1 the cap is 68 shells; an explorer needs X = 1 or a
  // landing in its cell, so 68 straight failures are vanishingly rare, but a
  // cap is still enforced by the tracker.
  const auto p = ShellPartition::constant(16, 1);
  EXPECT_EQ(p.shell_cap(), 68u);
  EXPECT_NO_THROW(grow_flashing<2>(50, p, 1, {Engine::kJump}));
}

TEST(GrowFlashingWaves, SameClusterAsSequential) {
  const auto p = ShellPartition::constant(16, 30);
  const auto n = static_cast<std::size_t>(ball_size<2>(30));
  for (auto engine : {Engine::kStep, Engine::kJump}) {
    const auto seq = grow_flashing<2>(n, p, 5, {engine});
    WaveOptions opt;
    opt.flash.engine = engine;
    const auto w = grow_flashing_waves<2>(n, p, 5, opt);
    EXPECT_TRUE(seq.occupied.same_sites(w.cluster.occupied));
    ASSERT_EQ(seq.history.size(), w.cluster.history.size());
    for (std::size_t i = 0; i < seq.history.size(); ++i) {
      EXPECT_EQ(seq.history[i].stop, w.cluster.history[i].stop);
      EXPECT_EQ(seq.history[i].settled, w.cluster.history[i].settled);
    }
    check_history(w.cluster, p, n);
    // Conservation and monotonicity over waves.
    std::size_t prev = 0;
    for (const auto& s : w.waves) {
      EXPECT_EQ(s.unsettled + s.settled, n);
      EXPECT_GE(s.settled, prev);
      prev = s.settled;
    }
    EXPECT_EQ(w.waves.back().unsettled, 0u);
    EXPECT_EQ(w.first_hole_wave, first_hole_wave(w.cluster.occupied, p));
    EXPECT_GE(w.first_hole_wave, 1u);
  }
}

TEST(GrowFlashingWaves, OneWaveWhenEverybodySettlesInTheBall) {
  const auto p = ShellPartition::constant(16, 20);
  int one_wave = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto w = grow_flashing_waves<2>(5, p, s);
    bool all_in_ball = true;
    for (const auto& q : w.cluster.occupied) all_in_ball = all_in_ball && p.in_shell(q, 0);
    EXPECT_EQ(w.waves.size() == 1, all_in_ball);
    one_wave += all_in_ball;
  }
  EXPECT_GT(one_wave, 0);
}

TEST(GrowFlashingWaves, TileTraceCountsUnsettledExplorers) {
  const auto p = ShellPartition::constant(16, 20);
  WaveOptions opt;
  opt.flash.engine = Engine::kJump;
  opt.trace_tiles = true;
  const auto w = grow_flashing_waves<2>(1200, p, 3, opt);
  ASSERT_FALSE(w.tile_rows.empty());
  // Every unsettled explorer stands on Sigma_k, which the tiles cover, so each
  // is counted at least once per wave.
  std::map<std::size_t, std::size_t> per_wave;
  for (const auto& r : w.tile_rows) per_wave[r.wave] += r.unsettled;
  for (const auto& s : w.waves)
    if (s.unsettled > 0) {
      EXPECT_GE(per_wave[s.wave], s.unsettled);
    }
}

TEST(FirstHoleWave, Examples) {
  const auto p = ShellPartition::constant(16, 40);
  EXPECT_EQ(first_hole_wave(Region<2>{}, p), 1u);
  const auto ball = enumerate_ball<2>({}, 16);
  EXPECT_EQ(first_hole_wave(ball, p), 2u);
  const auto big = enumerate_ball<2>({}, 48);
  EXPECT_EQ(first_hole_wave(big, p), 3u);
}

TEST(Tiles, ExhaustiveAtWidth16) {
  const auto p = ShellPartition::constant(16, 60);
  const auto ts = build_tiles<2>(p, 1);
  EXPECT_TRUE(ts.exhaustive);
  EXPECT_EQ(ts.checked_sites, static_cast<std::size_t>(p.shell_volume<2>(1)));
  EXPECT_GT(ts.overlap, 0);
  EXPECT_LE(ts.overlap, 64);
  // Anchors are pairwise at distance >= eps0 h / 2 = 1, and every Sigma site
  // is in some tile.
  for (std::size_t a = 0; a < ts.tiles.size(); ++a)
    for (std::size_t b = a + 1; b < ts.tiles.size(); ++b)
      EXPECT_GE(norm2(ts.tiles[a].anchor - ts.tiles[b].anchor), 1);
  for (const auto& z : ts.sigma) EXPECT_FALSE(ts.tiles_of(z).empty());
  const auto sup = tile_hitting_sup<2>(p, ts);
  for (double s : sup) {
    EXPECT_GT(s, 0.0);
    EXPECT_LE(s, 0.9);
  }
}

TEST(Tiles, OverlapAtWidth32) {
  const auto p = ShellPartition::constant(32, 100);
  const auto ts = build_tiles<2>(p, 1);
  EXPECT_TRUE(ts.exhaustive);
  EXPECT_LE(ts.overlap, 64);
}

TEST(Tiles, RejectsBadEps) {
  const auto p = ShellPartition::constant(16, 60);
  TileOptions opt;
  opt.eps0 = 0.25;
  EXPECT_THROW(build_tiles<2>(p, 1, opt), ConfigError);
  EXPECT_THROW(build_tiles<2>(p, 0), ConfigError);
}

TEST(Tiles, HittingSupMatchesMonteCarlo) {
  const auto p = ShellPartition::constant(16, 60);
  const auto ts = build_tiles<2>(p, 1);
  const auto sup = tile_hitting_sup<2>(p, ts);
  // Probability of hitting tile 0 from (0, 0).
  const Region<2> members(ts.tiles[0].sites.begin(), ts.tiles[0].sites.end());
  KilledWalkSystem<2> sys(enumerate_ball<2>({}, p.center(1)));
  const auto u = sys.exit_expectation([&](const Point<2>& q) { return members.contains(q) ? 1.0 : 0.0; }).x;
  const double exact = u[sys.region().index_of(Point<2>{})];
  EXPECT_LE(exact, sup[0] + 1e-12);
  RandomStream rng(6, 0);
  const int n = 200000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    Point<2> pos{};
    while (norm2_below(norm2(pos), p.center(1))) macro_step(pos, cube_inside_ball(pos, Point<2>{}, p.center(1)), rng);
    hits += members.contains(pos);
  }
  EXPECT_LT(std::abs(hits - n * exact), 4 * std::sqrt(n * exact * (1 - exact)) + 1);
}

namespace {

// Probability that xi explorers started on tile t of shell 1 leave a site of
// the tile's common cell unhit during one wave.
double hole_probability(const ShellPartition& p, const TileSet<2>& ts, std::size_t t, std::size_t xi, int trials,
                        std::uint64_t seed) {
  const auto& tile = ts.tiles[t];
  std::vector<Point<2>> common;
  for (const auto& z : enumerate_annulus<2>(Annulus{p.inner(1), p.outer(1)})) {
    bool all = true;
    for (const auto& y : tile.sites) all = all && in_cell(p, 1, y, z);
    if (all) common.push_back(z);
  }
  int holes = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Region<2> hit;
    auto rng = RandomStream::for_domain(seed, StreamDomain::kAudit, static_cast<std::uint64_t>(trial));
    for (std::size_t i = 0; i < xi; ++i) {
      const auto& z = tile.sites[rng.below(tile.sites.size())];
      const auto draw = draw_flash(rng, 1, p.width(1), 2);
      const auto ev = flash_stop(p, 1, z, draw, rng, Engine::kJump);
      if (ev.flashed) hit.insert(ev.stop);
    }
    bool hole = false;
    for (const auto& z : common) hole = hole || !hit.contains(z);
    holes += hole;
  }
  return static_cast<double>(holes) / trials;
}

}  // namespace

TEST(Tiles, CoverProbabilityDecreasesWithThreshold) {
  const auto p = ShellPartition::constant(16, 60);
  const auto ts = build_tiles<2>(p, 1);
  // xi = A h^d log n explorers, in units of the smallest per-site hitting
  // weight: a pilot run puts min over the cell of P(S(sigma) = z) h^d near
  // 0.115, so without the 1 / 0.1 factor every A in {1, 2, 4} leaves a hole
  // almost surely.
  const double log_n = std::log(50.0);
  const double floor_weight = 0.1;
  std::vector<double> holes;
  for (double a : {1.0, 2.0, 4.0}) {
    const auto xi = static_cast<std::size_t>(std::ceil(a * 256 * log_n / floor_weight));
    holes.push_back(hole_probability(p, ts, ts.tiles.size() / 3, xi, 200, 17));
  }
  std::cout << "hole probability at A = 1, 2, 4: " << holes[0] << ' ' << holes[1] << ' ' << holes[2] << '\n';
  EXPECT_GE(holes[0], holes[1]);
  EXPECT_GE(holes[1], holes[2]);
  EXPECT_GT(holes[0], holes[2]);
}
