#pragma once

// Exact macro-steps for the simple random walk.
//
// From x, a walk that stays in the cube x + [-m, m]^d until it leaves has its
// exit site distributed as x + (exit law of [-m, m]^d from the center). The
// laws are solved exactly once per half-width and sampled through alias
// tables, so a walker crossing a region where nothing can happen (inside the
// cluster, inside a flashing ball) pays one draw per cube instead of ~m^2
// steps. Settling decisions are unchanged because they are only ever taken
// at sites outside such regions.

#include <array>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <vector>

#include "idla/lattice.hpp"
#include "idla/potential.hpp"
#include "idla/random.hpp"

namespace idla {

enum class Engine { kStep, kJump };

// Vose alias table over n outcomes; sampling costs one draw (high half picks
// the column, low half flips the biased coin).
class AliasTable {
 public:
  AliasTable() = default;

  explicit AliasTable(const std::vector<double>& weights) {
    const std::size_t n = weights.size();
    if (n == 0 || n >= (1ULL << 32)) throw ConfigError("AliasTable: bad size");
    double total = 0;
    for (double w : weights) total += w;
    std::vector<double> scaled(n);
    for (std::size_t i = 0; i < n; ++i) scaled[i] = weights[i] * static_cast<double>(n) / total;
    threshold_.assign(n, 0);
    alias_.assign(n, 0);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i) (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    while (!small.empty() && !large.empty()) {
      const auto s = small.back();
      small.pop_back();
      const auto l = large.back();
      set(s, scaled[s], l);
      scaled[l] -= 1.0 - scaled[s];
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (auto i : large) set(i, 1.0, i);
    for (auto i : small) set(i, 1.0, i);
  }

  std::size_t size() const { return threshold_.size(); }

  std::uint32_t sample(RandomStream& rng) const {
    const std::uint64_t u = rng.next_u64();
    const auto col = static_cast<std::uint32_t>(((u >> 32) * threshold_.size()) >> 32);
    const auto coin = static_cast<std::uint32_t>(u);
    return coin < threshold_[col] || threshold_[col] == kAlways ? col : alias_[col];
  }

 private:
  static constexpr std::uint32_t kAlways = 0xffffffffu;

  void set(std::uint32_t i, double p, std::uint32_t alias) {
    threshold_[i] = p >= 1.0 ? kAlways : static_cast<std::uint32_t>(std::ldexp(p, 32));
    alias_[i] = alias;
  }

  std::vector<std::uint32_t> threshold_;
  std::vector<std::uint32_t> alias_;
};

template <int D>
struct CubeExitLaw {
  int half_width = 0;
  std::vector<Point<D>> offsets;
  std::vector<double> probs;
  AliasTable table;
};

namespace detail {

template <int D>
CubeExitLaw<D> solve_cube_exit_law(int m) {
  Region<D> cube;
  Point<D> lo, hi;
  for (int i = 0; i < D; ++i) {
    lo[i] = -m;
    hi[i] = m;
  }
  for_each_in_box<D>(lo, hi, [&](const Point<D>& p) { cube.insert(p); });
  KilledWalkSystem<D> sys(std::move(cube));
  const auto law = sys.exit_law(Point<D>{});
  CubeExitLaw<D> out;
  out.half_width = m;
  for (const auto& [site, p] : law) {
    out.offsets.push_back(site);
    out.probs.push_back(p);
  }
  out.table = AliasTable(out.probs);
  return out;
}

// Tabulated half-widths, chosen so that consecutive entries differ by at
// most a factor 1.5 and the largest system stays below ~2e5 unknowns.
template <int D>
constexpr auto cube_half_widths() {
  if constexpr (D == 2)
    return std::array<int, 13>{1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96};
  else if constexpr (D == 3)
    return std::array<int, 9>{1, 2, 3, 4, 6, 8, 12, 16, 24};
  else
    return std::array<int, 6>{1, 2, 3, 4, 6, 8};
}

}  // namespace detail

// Lazily solved, process-wide cube exit laws. Thread safe.
template <int D>
class CubeExitTables {
 public:
  static CubeExitTables& instance() {
    static CubeExitTables t;
    return t;
  }

  // Largest tabulated law with half-width <= m, or nullptr if m < 1.
  const CubeExitLaw<D>* usable(int m) {
    constexpr auto widths = detail::cube_half_widths<D>();
    int k = -1;
    for (std::size_t i = 0; i < widths.size(); ++i)
      if (widths[i] <= m) k = static_cast<int>(i);
    if (k < 0) return nullptr;
    auto& slot = laws_[static_cast<std::size_t>(k)];
    std::call_once(flags_[static_cast<std::size_t>(k)],
                   [&] { slot = detail::solve_cube_exit_law<D>(widths[static_cast<std::size_t>(k)]); });
    return &slot;
  }

 private:
  CubeExitTables() = default;
  static constexpr std::size_t kCount = detail::cube_half_widths<D>().size();
  std::array<CubeExitLaw<D>, kCount> laws_{};
  std::array<std::once_flag, kCount> flags_{};
};

// Largest m with the cube p + [-m, m]^d inside the open ball B(c, radius),
// via ||p - c|| + m sqrt(d) < radius. Conservative by a relative 1e-9.
template <int D>
int cube_inside_ball(const Point<D>& p, const Point<D>& c, double radius) {
  const double slack = radius - norm(p - c);
  if (slack <= 0) return 0;
  return static_cast<int>(std::floor(slack / std::sqrt(static_cast<double>(D)) * (1 - 1e-9)));
}

// Largest m with p + [-m, m]^d inside A(inner, outer) (both radii around 0).
template <int D>
int cube_inside_annulus(const Point<D>& p, double inner, double outer) {
  const double r = norm(p);
  const double slack = std::min(outer - r, r - inner);
  if (slack <= 0) return 0;
  return static_cast<int>(std::floor(slack / std::sqrt(static_cast<double>(D)) * (1 - 1e-9)));
}

// One macro-step: a cube jump if half_width >= 1, a single step otherwise.
// Either way exactly one draw.
template <int D>
void macro_step(Point<D>& position, int half_width, RandomStream& rng) {
  const CubeExitLaw<D>* law = half_width >= 1 ? CubeExitTables<D>::instance().usable(half_width) : nullptr;
  if (law == nullptr) {
    position = neighbor(position, rng.below(kNeighborCount<D>));
    return;
  }
  position = position + law->offsets[law->table.sample(rng)];
}

}  // namespace idla
