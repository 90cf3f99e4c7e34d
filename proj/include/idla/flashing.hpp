#pragma once

// The flashing process: explorers may only settle at flashing times, at most
// once per shell, and land nearly uniformly on a cell of the shell.
//
// Geometry: S_0 = B(0, h_0); S_j = A(r_j - h_j, r_j + h_j) with r_1 = h_0 + h_1,
// r_{j+1} = r_j + h_j + h_{j+1}; Sigma_0 = {0}, Sigma_j = boundary of B(0, r_j).
// Randomness: explorer i walks with stream (seed, kWalk, i) and draws
// (X_j, Y_j, R_j) for shell j from stream (seed, kFlash, i, j), so the
// sequential and wave builders see identical trajectories and draws.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "idla/errors.hpp"
#include "idla/idla.hpp"
#include "idla/jump.hpp"
#include "idla/lattice.hpp"
#include "idla/potential.hpp"
#include "idla/random.hpp"

namespace idla {

inline constexpr double kMinFlashWidth = 16;
inline constexpr double kDefaultEps0 = 0.125;

class ShellPartition {
 public:
  // h_j = h0 for all j.
  static ShellPartition constant(double h0, double max_radius) { return from_widths({h0}, max_radius); }

  // widths[j] = h_j; the last width is repeated beyond the list.
  static ShellPartition from_widths(std::vector<double> widths, double max_radius) {
    if (widths.empty()) throw ConfigError("ShellPartition: need at least h_0");
    if (!(max_radius > 0)) throw ConfigError("ShellPartition: max radius must be positive");
    for (double h : widths)
      if (!(h >= 1)) throw ConfigError("ShellPartition: widths must be >= 1");
    for (std::size_t j = 1; j + 1 < widths.size(); ++j) {
      const double lo = widths[j], hi = widths[j] * (1 + 1.0 / (2.0 * static_cast<double>(j)));
      if (widths[j + 1] < lo * (1 - 1e-12) || widths[j + 1] > hi * (1 + 1e-12))
        throw ConfigError("ShellPartition: inadmissible widths h_" + std::to_string(j) + " = " +
                          std::to_string(widths[j]) + ", h_" + std::to_string(j + 1) + " = " +
                          std::to_string(widths[j + 1]));
    }
    ShellPartition p;
    p.max_radius_ = max_radius;
    auto width_at = [&](std::size_t j) { return j < widths.size() ? widths[j] : widths.back(); };
    p.h_.push_back(width_at(0));
    p.r_.push_back(0.0);
    p.outer_.push_back(width_at(0));
    while (p.outer_.back() < max_radius) p.append(width_at(p.h_.size()));
    p.within_ = p.h_.size();
    p.cap_ = 4 * p.within_ + 64;
    while (p.h_.size() < p.cap_ + 2) p.append(width_at(p.h_.size()));
    return p;
  }

  double width(std::size_t j) const { return h_.at(j); }
  double center(std::size_t j) const { return r_.at(j); }
  double inner(std::size_t j) const { return j == 0 ? 0.0 : r_.at(j) - h_.at(j); }
  double outer(std::size_t j) const { return outer_.at(j); }
  double max_radius() const { return max_radius_; }
  // Shells meeting B(0, max radius).
  std::size_t shells_within() const { return within_; }
  std::size_t shell_cap() const { return cap_; }
  std::size_t tabulated() const { return h_.size(); }

  template <int D>
  std::size_t shell_of(const Point<D>& z) const {
    const auto n2 = norm2(z);
    std::size_t lo = 0, hi = outer_.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (norm2_below(n2, outer_[mid]))
        hi = mid;
      else
        lo = mid + 1;
    }
    if (lo == outer_.size()) throw ShellCapExceeded("shell_of: site beyond tabulated shells " + to_string(z));
    return lo;
  }

  template <int D>
  bool in_shell(const Point<D>& z, std::size_t j) const {
    const auto n2 = norm2(z);
    return norm2_below(n2, outer(j)) && (j == 0 || !norm2_below(n2, inner(j)));
  }

  template <int D>
  std::int64_t shell_volume(std::size_t j) const {
    return ball_size<D>(outer(j)) - (j == 0 ? 0 : ball_size<D>(inner(j)));
  }

  // The flashing construction needs h_0 >= 16 (so that 1 + 2 eps0 h <= h / 2
  // with eps0 = 1/8, and flashing exits never reach the next Sigma).
  void require_flashing_widths() const {
    if (h_[0] < kMinFlashWidth)
      throw ConfigError("flashing needs h_0 >= " + std::to_string(static_cast<int>(kMinFlashWidth)));
  }

 private:
  void append(double h) {
    const std::size_t j = h_.size();
    const double r = j == 1 ? h_[0] + h : r_[j - 1] + h_[j - 1] + h;
    h_.push_back(h);
    r_.push_back(r);
    outer_.push_back(r + h);
  }

  std::vector<double> h_, r_, outer_;
  double max_radius_ = 0;
  std::size_t within_ = 0, cap_ = 0;
};

// x in the cone { lambda y : lambda >= 0, y in B(apex_dir, base) }, exact for
// dyadic base radii (all products stay below 2^64).
template <int D>
bool in_cone(const Point<D>& axis, const Point<D>& x, double base) {
  if (norm2_below(norm2(axis), base)) return true;  // base ball holds 0
  if (is_origin(x)) return true;
  const std::int64_t d = dot(axis, x);
  if (d <= 0) return false;
  const __int128 cross = static_cast<__int128>(norm2(axis)) * norm2(x) - static_cast<__int128>(d) * d;
  const long double rhs = static_cast<long double>(base) * base * static_cast<long double>(norm2(x));
  return static_cast<long double>(cross) < rhs;
}

// C(anchor) for shell j: the shell intersected with the cone over B(anchor, h_j / 2).
template <int D>
bool in_cell(const ShellPartition& shells, std::size_t j, const Point<D>& anchor, const Point<D>& z) {
  return shells.in_shell(z, j) && in_cone(anchor, z, shells.width(j) / 2);
}

// The shrunken cell, base radius eps0 h_j.
template <int D>
bool in_shrunken_cell(const ShellPartition& shells, std::size_t j, const Point<D>& anchor, const Point<D>& z,
                      double eps0) {
  return shells.in_shell(z, j) && in_cone(anchor, z, eps0 * shells.width(j));
}

struct FlashDraw {
  bool x = false;
  bool y = false;
  double r = 0;
};

// Three draws: X ~ Bernoulli(h^-d), Y ~ Bernoulli(1/2) (always 1 for j = 0),
// R = h U^{1/d}.
inline FlashDraw draw_flash(RandomStream& s, std::size_t shell, double h, int d) {
  const double u1 = s.uniform(), u2 = s.uniform(), u3 = s.uniform_open();
  FlashDraw f;
  f.x = u1 < std::pow(h, -d);
  f.y = shell == 0 || u2 < 0.5;
  f.r = h * std::pow(u3, 1.0 / d);
  return f;
}

inline RandomStream flash_stream(std::uint64_t seed, std::uint64_t explorer, std::uint64_t shell) {
  return RandomStream::for_domain(seed, StreamDomain::kFlash, explorer, shell);
}

template <int D>
struct FlashEvent {
  std::uint32_t explorer = 0;
  std::uint32_t shell = 0;
  Point<D> entry{};
  Point<D> stop{};
  bool flashed = false;
  bool settled = false;
};

// Follows one trajectory through the shells and reports each sigma_j. Feed it
// every position of the walk, starting with the origin.
template <int D>
class FlashTracker {
 public:
  enum class Phase { kSeek, kBall, kAnnulus };

  struct Sigma {
    std::size_t shell;
    Point<D> entry;
    Point<D> stop;
    bool flashed;
  };

  enum class Status { kNone, kSigma, kPaused };

  FlashTracker(const ShellPartition* shells, std::uint64_t seed, std::uint64_t explorer)
      : shells_(shells), seed_(seed), explorer_(explorer) {}

  // Processes the walker standing at `pos`. If the walker is about to enter
  // shell `pause_at`, stops before drawing for it and returns kPaused; calling
  // again with a later pause shell resumes from the same position.
  Status observe(const Point<D>& pos, std::size_t pause_at = std::numeric_limits<std::size_t>::max()) {
    bool sigma_seen = false;
    for (;;) {
      switch (phase_) {
        case Phase::kSeek: {
          const bool hit = shell_ == 0 ? is_origin(pos) : !norm2_below(norm2(pos), shells_->center(shell_));
          if (!hit) return sigma_seen ? Status::kSigma : Status::kNone;
          if (shell_ == pause_at) {
            if (sigma_seen) throw InvariantViolation("flashing: paused at the time of a flash");
            return Status::kPaused;
          }
          enter(pos);
          break;
        }
        case Phase::kBall:
          if (norm2_below(norm2(pos - entry_), ball_radius_)) return sigma_seen ? Status::kSigma : Status::kNone;
          finish(pos);
          break;
        case Phase::kAnnulus:
          if (inside_annulus(pos)) return sigma_seen ? Status::kSigma : Status::kNone;
          finish(pos);
          break;
      }
      if (pending_) {
        if (sigma_seen) throw InvariantViolation("flashing: two flashing times at one position");
        sigma_seen = true;
        pending_ = false;
      }
    }
  }

  const Sigma& last_sigma() const { return last_; }
  Phase phase() const { return phase_; }
  // Shell being sought (kSeek) or processed.
  std::size_t shell() const { return shell_; }
  const Point<D>& entry() const { return entry_; }

  // Largest cube half-width around pos inside which no event can happen.
  int safe_half_width(const Point<D>& pos) const {
    switch (phase_) {
      case Phase::kSeek:
        return shell_ == 0 ? 0 : cube_inside_ball(pos, Point<D>{}, shells_->center(shell_));
      case Phase::kBall:
        return cube_inside_ball(pos, entry_, ball_radius_);
      case Phase::kAnnulus:
        return cube_inside_annulus(pos, ring_inner_, ring_outer_);
    }
    return 0;
  }

 private:
  bool inside_annulus(const Point<D>& pos) const {
    const auto n2 = norm2(pos);
    return norm2_below(n2, ring_outer_) && !norm2_below(n2, ring_inner_);
  }

  void enter(const Point<D>& pos) {
    if (shell_ > shells_->shell_cap())
      throw ShellCapExceeded("flashing: explorer " + std::to_string(explorer_) + " crossed " +
                             std::to_string(shell_) + " shells without settling");
    entry_ = pos;
    auto s = flash_stream(seed_, explorer_, shell_);
    const double h = shells_->width(shell_);
    draw_ = draw_flash(s, shell_, h, D);
    if (draw_.x) {
      finish(pos);
      return;
    }
    const double r = shells_->center(shell_);
    if (draw_.y) {
      ball_radius_ = std::min(draw_.r, r + h - norm(pos));
      phase_ = Phase::kBall;
      if (!norm2_below(0, ball_radius_)) finish(pos);
    } else {
      ring_inner_ = r - draw_.r;
      ring_outer_ = r + draw_.r;
      phase_ = Phase::kAnnulus;
      if (!inside_annulus(pos)) finish(pos);
    }
  }

  void finish(const Point<D>& pos) {
    last_ = {shell_, entry_, pos, in_cell(*shells_, shell_, entry_, pos)};
    pending_ = true;
    phase_ = Phase::kSeek;
    ++shell_;
  }

  const ShellPartition* shells_;
  std::uint64_t seed_;
  std::uint64_t explorer_;
  Phase phase_ = Phase::kSeek;
  std::size_t shell_ = 0;
  Point<D> entry_{};
  FlashDraw draw_{};
  double ball_radius_ = 0, ring_inner_ = 0, ring_outer_ = 0;
  Sigma last_{};
  bool pending_ = false;
};

// Outcome of the first flashing time at z_j, with a fixed draw, for an
// explorer started at z_j. One trajectory; consumes walk draws from `walk`.
template <int D>
FlashEvent<D> flash_stop(const ShellPartition& shells, std::size_t j, const Point<D>& entry, const FlashDraw& draw,
                         RandomStream& walk, Engine engine = Engine::kStep,
                         std::uint64_t step_cap = kDefaultStepCap) {
  const double h = shells.width(j), r = shells.center(j);
  FlashEvent<D> ev;
  ev.shell = static_cast<std::uint32_t>(j);
  ev.entry = entry;
  Point<D> pos = entry;
  if (!draw.x) {
    std::uint64_t budget = step_cap;
    auto guard = [&] {
      if (budget-- == 0) throw StepCapExceeded("flash_stop: step cap exceeded");
    };
    if (draw.y) {
      const double rho = std::min(draw.r, r + h - norm(entry));
      while (norm2_below(norm2(pos - entry), rho)) {
        guard();
        macro_step(pos, engine == Engine::kJump ? cube_inside_ball(pos, entry, rho) : 0, walk);
      }
    } else {
      const double lo = r - draw.r, hi = r + draw.r;
      auto inside = [&](const Point<D>& p) { return norm2_below(norm2(p), hi) && !norm2_below(norm2(p), lo); };
      while (inside(pos)) {
        guard();
        macro_step(pos, engine == Engine::kJump ? cube_inside_annulus(pos, lo, hi) : 0, walk);
      }
    }
  }
  ev.stop = pos;
  ev.flashed = in_cell(shells, j, entry, pos);
  return ev;
}

template <int D>
struct FlashCluster {
  Region<D> occupied;
  std::vector<SettleEvent<D>> settles;  // in settling order
  // Every flashing time of every explorer, ordered by (explorer, shell).
  std::vector<FlashEvent<D>> history;

  std::size_t size() const { return occupied.size(); }
};

struct FlashOptions {
  Engine engine = Engine::kStep;
  std::uint64_t step_cap = kDefaultStepCap;
  bool record_history = true;
};

namespace detail {

template <int D>
struct FlashExplorer {
  std::uint32_t id;
  Point<D> pos;
  RandomStream rng;
  FlashTracker<D> tracker;
  std::uint64_t time = 0;
};

// Advances an explorer until it settles (true) or pauses before shell
// `pause_at` (false).
template <int D>
bool run_flash_explorer(FlashExplorer<D>& e, FlashCluster<D>& c, std::size_t pause_at, const FlashOptions& opt) {
  std::uint64_t budget = opt.step_cap;
  for (;;) {
    const auto st = e.tracker.observe(e.pos, pause_at);
    if (st == FlashTracker<D>::Status::kPaused) return false;
    if (st == FlashTracker<D>::Status::kSigma) {
      const auto& s = e.tracker.last_sigma();
      const bool settle = s.flashed && !c.occupied.contains(s.stop);
      if (opt.record_history)
        c.history.push_back({e.id, static_cast<std::uint32_t>(s.shell), s.entry, s.stop, s.flashed, settle});
      if (settle) {
        c.occupied.insert(s.stop);
        c.settles.push_back({e.id, s.stop, e.time});
        return true;
      }
    }
    if (budget-- == 0) throw StepCapExceeded("flashing: explorer " + std::to_string(e.id) + " exceeded step cap");
    macro_step(e.pos, opt.engine == Engine::kJump ? e.tracker.safe_half_width(e.pos) : 0, e.rng);
    ++e.time;
  }
}

}  // namespace detail

// Sequential flashing process with N explorers.
template <int D>
FlashCluster<D> grow_flashing(std::size_t n_explorers, const ShellPartition& shells, std::uint64_t seed,
                              const FlashOptions& opt = {}) {
  shells.require_flashing_widths();
  FlashCluster<D> c;
  for (std::size_t k = 0; k < n_explorers; ++k) {
    detail::FlashExplorer<D> e{static_cast<std::uint32_t>(k), Point<D>{}, explorer_stream(seed, k),
                               FlashTracker<D>(&shells, seed, k)};
    detail::run_flash_explorer(e, c, std::numeric_limits<std::size_t>::max(), opt);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Tiles.

template <int D>
struct Tile {
  Point<D> anchor{};
  std::vector<Point<D>> sites;  // Sigma_j inside the shrunken cell of the anchor
};

template <int D>
struct TileSet {
  std::size_t shell = 0;
  double eps0 = kDefaultEps0;
  std::vector<Tile<D>> tiles;
  std::vector<Point<D>> sigma;  // Sigma_j, lexicographic
  int overlap = 0;              // K_F: max number of shrunken cells holding one shell site
  bool exhaustive = false;      // all shell sites checked (else sampled)
  std::size_t checked_sites = 0;

  // Ids of the tiles holding a Sigma_j site.
  const std::vector<std::uint32_t>& tiles_of(const Point<D>& site) const {
    static const std::vector<std::uint32_t> none;
    const auto i = index_.index_of(site);
    return i < 0 ? none : membership_[static_cast<std::size_t>(i)];
  }

  Region<D> index_;
  std::vector<std::vector<std::uint32_t>> membership_;
};

// Sigma_j = outer boundary of B(0, r_j) (for j = 0, the origin).
template <int D>
std::vector<Point<D>> sigma_sites(const ShellPartition& shells, std::size_t j) {
  if (j == 0) return {Point<D>{}};
  const double r = shells.center(j);
  std::vector<Point<D>> out;
  for (const auto& p : enumerate_annulus<D>(Annulus{r, r + 1})) {
    bool inner = false;
    for (unsigned k = 0; k < kNeighborCount<D> && !inner; ++k) inner = norm2_below(norm2(neighbor(p, k)), r);
    if (inner) out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {

// Bucketed points for radius queries.
template <int D>
class PointHash {
 public:
  PointHash(const std::vector<Point<D>>& pts, double cell) : cell_(std::max(cell, 1.0)) {
    for (std::uint32_t i = 0; i < pts.size(); ++i) buckets_[key(pts[i])].push_back(i);
  }

  template <typename F>
  void near(const std::array<double, D>& x, F&& f) const {
    std::array<std::int64_t, D> base{};
    for (int i = 0; i < D; ++i) base[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::floor(x[static_cast<std::size_t>(i)] / cell_));
    std::array<int, D> off{};
    off.fill(-1);
    for (;;) {
      std::array<std::int64_t, D> k = base;
      for (int i = 0; i < D; ++i) k[static_cast<std::size_t>(i)] += off[static_cast<std::size_t>(i)];
      const auto it = buckets_.find(pack(k));
      if (it != buckets_.end())
        for (auto id : it->second) f(id);
      int i = 0;
      for (; i < D; ++i) {
        if (++off[static_cast<std::size_t>(i)] <= 1) break;
        off[static_cast<std::size_t>(i)] = -1;
      }
      if (i == D) return;
    }
  }

 private:
  static std::uint64_t pack(const std::array<std::int64_t, D>& k) {
    std::uint64_t h = 0;
    for (auto v : k) h = h * 0x100000001b3ULL ^ static_cast<std::uint64_t>(v + (1 << 20));
    return h;
  }
  std::uint64_t key(const Point<D>& p) const {
    std::array<std::int64_t, D> k{};
    for (int i = 0; i < D; ++i) k[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(std::floor(p[i] / cell_));
    return pack(k);
  }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> buckets_;
};

template <int D>
double squared_distance(const std::array<double, D>& x, const Point<D>& p) {
  double s = 0;
  for (int i = 0; i < D; ++i) s += (x[static_cast<std::size_t>(i)] - p[i]) * (x[static_cast<std::size_t>(i)] - p[i]);
  return s;
}

template <int D>
std::array<double, D> radial_projection(const Point<D>& z, double radius) {
  std::array<double, D> out{};
  const double s = radius / norm(z);
  for (int i = 0; i < D; ++i) out[static_cast<std::size_t>(i)] = z[i] * s;
  return out;
}

}  // namespace detail

struct TileOptions {
  double eps0 = kDefaultEps0;
  // Check every shell site when h_j is at most this, else sample.
  double exhaustive_width = 32;
  std::size_t samples = 20000;
  std::uint64_t seed = 0;
};

// Greedy lexicographic packing of Sigma_j at spacing eps0 h_j / 2, with the
// covering, bounded-overlap and common-cell properties verified. Throws
// InvariantViolation if a check fails.
template <int D>
TileSet<D> build_tiles(const ShellPartition& shells, std::size_t j, const TileOptions& opt = {}) {
  if (j == 0) throw ConfigError("build_tiles: shell 0 has a single-site Sigma");
  const double h = shells.width(j);
  if (!(opt.eps0 > 0) || 1 + 2 * opt.eps0 * h > h / 2)
    throw ConfigError("build_tiles: eps0 must satisfy 1 + 2 eps0 h_j <= h_j / 2");
  TileSet<D> ts;
  ts.shell = j;
  ts.eps0 = opt.eps0;
  ts.sigma = sigma_sites<D>(shells, j);
  const double spacing = opt.eps0 * h / 2;
  const long double spacing2 = static_cast<long double>(spacing) * spacing;

  // Packing.
  std::vector<Point<D>> anchors;
  {
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> grid;
    const double cell = std::max(spacing, 1.0);
    auto bucket = [&](const Point<D>& p, const std::array<int, D>& off) {
      std::uint64_t key = 0;
      for (int i = 0; i < D; ++i)
        key = key * 0x100000001b3ULL ^
              static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(p[i] / cell)) + off[static_cast<std::size_t>(i)] + (1 << 20));
      return key;
    };
    for (const auto& z : ts.sigma) {
      bool free = true;
      std::array<int, D> off{};
      off.fill(-1);
      for (;;) {
        const auto it = grid.find(bucket(z, off));
        if (it != grid.end())
          for (auto id : it->second)
            if (static_cast<long double>(norm2(anchors[id] - z)) < spacing2) free = false;
        int i = 0;
        for (; i < D; ++i) {
          if (++off[static_cast<std::size_t>(i)] <= 1) break;
          off[static_cast<std::size_t>(i)] = -1;
        }
        if (i == D || !free) break;
      }
      if (free) {
        std::array<int, D> zero{};
        grid[bucket(z, zero)].push_back(static_cast<std::uint32_t>(anchors.size()));
        anchors.push_back(z);
      }
    }
  }

  const double r = shells.center(j);
  const double shrunk = opt.eps0 * h;
  const double wide = h / 2;
  // Any anchor whose shrunken (resp. full) cone holds z lies within this
  // distance of the projection of z on the sphere of radius r_j.
  const double reach_shrunk = shrunk + shrunk * shrunk / r + 1.5;
  const double reach_wide = wide + wide * wide / r + 1.5;
  detail::PointHash<D> hash(anchors, reach_wide);

  ts.tiles.resize(anchors.size());
  for (std::size_t a = 0; a < anchors.size(); ++a) ts.tiles[a].anchor = anchors[a];
  ts.index_ = Region<D>(ts.sigma.begin(), ts.sigma.end());
  ts.membership_.assign(ts.sigma.size(), {});
  for (std::size_t s = 0; s < ts.sigma.size(); ++s) {
    const auto& z = ts.sigma[s];
    const auto proj = detail::radial_projection<D>(z, r);
    hash.near(proj, [&](std::uint32_t a) {
      if (in_shrunken_cell(shells, j, anchors[a], z, opt.eps0)) {
        ts.tiles[a].sites.push_back(z);
        ts.membership_[s].push_back(a);
      }
    });
    if (ts.membership_[s].empty())
      throw InvariantViolation("build_tiles: Sigma site " + to_string(z) + " is in no tile");
  }
  for (auto& m : ts.membership_) std::sort(m.begin(), m.end());
  for (auto& t : ts.tiles) std::sort(t.sites.begin(), t.sites.end());

  // Shell sites: covering by shrunken cells, overlap, common cell.
  auto check_site = [&](const Point<D>& z) {
    const auto proj = detail::radial_projection<D>(z, r);
    int count = 0;
    bool common = false;
    hash.near(proj, [&](std::uint32_t a) {
      const double dist = std::sqrt(detail::squared_distance<D>(proj, anchors[a]));
      if (dist <= reach_shrunk && in_shrunken_cell(shells, j, anchors[a], z, opt.eps0)) ++count;
      if (!common && dist <= reach_wide && !ts.tiles[a].sites.empty()) {
        bool all = true;
        for (const auto& y : ts.tiles[a].sites)
          if (!in_cell(shells, j, y, z)) {
            all = false;
            break;
          }
        common = all;
      }
    });
    if (count == 0) throw InvariantViolation("build_tiles: shell site " + to_string(z) + " is in no shrunken cell");
    if (!common) throw InvariantViolation("build_tiles: shell site " + to_string(z) + " has no common-cell tile");
    ts.overlap = std::max(ts.overlap, count);
    ++ts.checked_sites;
  };
  const Annulus ring{shells.inner(j), shells.outer(j)};
  if (h <= opt.exhaustive_width) {
    ts.exhaustive = true;
    for (const auto& z : enumerate_annulus<D>(ring)) check_site(z);
  } else {
    // Uniform sample of shell sites by rejection from the bounding box.
    RandomStream rng = RandomStream::for_domain(opt.seed, StreamDomain::kAudit, 0x7469, j);
    const auto half = static_cast<std::uint32_t>(std::ceil(ring.outer));
    std::size_t done = 0;
    while (done < opt.samples) {
      Point<D> z;
      for (int i = 0; i < D; ++i) z[i] = static_cast<std::int32_t>(rng.below(2 * half + 1)) - static_cast<std::int32_t>(half);
      if (!ring.contains(z)) continue;
      check_site(z);
      ++done;
    }
  }
  return ts;
}

// sup over z in B(0, r_j - h_j) of P_z(S(H(Sigma_j)) in T), exactly, for every
// tile T. Sigma_j is first reached when leaving B(0, r_j).
template <int D>
std::vector<double> tile_hitting_sup(const ShellPartition& shells, const TileSet<D>& ts) {
  const std::size_t j = ts.shell;
  KilledWalkSystem<D> sys(enumerate_ball<D>(Point<D>{}, shells.center(j)));
  const double inner = shells.inner(j);
  std::vector<double> out;
  out.reserve(ts.tiles.size());
  for (const auto& t : ts.tiles) {
    Region<D> members(t.sites.begin(), t.sites.end());
    const auto u = sys.exit_expectation([&](const Point<D>& q) { return members.contains(q) ? 1.0 : 0.0; }).x;
    double best = 0;
    for (std::size_t i = 0; i < sys.size(); ++i)
      if (norm2_below(norm2(sys.region()[i]), inner)) best = std::max(best, u[static_cast<Eigen::Index>(i)]);
    out.push_back(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Waves.

// min{k >= 1 : union_{j<k} S_j not inside the cluster} = (first shell with a
// hole) + 1, since shell j receives no explorer after wave j + 1.
template <int D>
std::size_t first_hole_wave(const Region<D>& occupied, const ShellPartition& shells) {
  std::vector<std::int64_t> filled(shells.tabulated(), 0);
  for (const auto& p : occupied) ++filled[shells.shell_of(p)];
  for (std::size_t j = 0; j < filled.size(); ++j)
    if (filled[j] < shells.shell_volume<D>(j)) return j + 1;
  throw ShellCapExceeded("first_hole_wave: every tabulated shell is filled");
}


struct WaveSummary {
  std::size_t wave = 0;        // k: explorers now stand on Sigma_k or have settled
  std::size_t unsettled = 0;   // sum over Sigma_k of W_k
  std::size_t settled = 0;     // |A*_k(N)|
};

struct WaveTileRow {
  std::size_t wave = 0;
  std::uint32_t tile = 0;
  std::size_t unsettled = 0;   // W_k(T)
  std::size_t settled = 0;     // |A*_k(N)| after the wave
};

template <int D>
struct WaveResult {
  FlashCluster<D> cluster;
  std::vector<WaveSummary> waves;
  std::vector<WaveTileRow> tile_rows;  // only with per-tile tracing
  // First k >= 1 with some S_j, j < k, not filled after wave k.
  std::size_t first_hole_wave = 0;
};

struct WaveOptions {
  FlashOptions flash{};
  bool trace_tiles = false;
  TileOptions tiles{};
};

// Shells are filled wave by wave: wave k moves every unsettled explorer, in
// label order, from Sigma_{k-1} until it settles in S_{k-1} or stops on
// Sigma_k. Identical cluster to grow_flashing under the same seed.
template <int D>
WaveResult<D> grow_flashing_waves(std::size_t n_explorers, const ShellPartition& shells, std::uint64_t seed,
                                  const WaveOptions& opt = {}) {
  shells.require_flashing_widths();
  WaveResult<D> out;
  auto& c = out.cluster;
  std::vector<detail::FlashExplorer<D>> pending;
  pending.reserve(n_explorers);
  for (std::size_t k = 0; k < n_explorers; ++k)
    pending.push_back({static_cast<std::uint32_t>(k), Point<D>{}, explorer_stream(seed, k),
                       FlashTracker<D>(&shells, seed, k)});

  for (std::size_t k = 1; !pending.empty(); ++k) {
    std::vector<detail::FlashExplorer<D>> next;
    for (auto& e : pending)
      if (!detail::run_flash_explorer(e, c, k, opt.flash)) next.push_back(std::move(e));
    pending.swap(next);
    out.waves.push_back({k, pending.size(), c.occupied.size()});
    if (opt.trace_tiles && !pending.empty()) {
      const auto ts = build_tiles<D>(shells, k, opt.tiles);
      std::vector<std::size_t> w(ts.tiles.size(), 0);
      for (const auto& e : pending)
        for (auto t : ts.tiles_of(e.pos)) ++w[t];
      for (std::uint32_t t = 0; t < w.size(); ++t) out.tile_rows.push_back({k, t, w[t], c.occupied.size()});
    }
    if (k > shells.shell_cap() + 1) throw ShellCapExceeded("flashing waves: shell cap exceeded");
  }
  std::stable_sort(c.history.begin(), c.history.end(), [](const FlashEvent<D>& a, const FlashEvent<D>& b) {
    return a.explorer != b.explorer ? a.explorer < b.explorer : a.shell < b.shell;
  });
  out.first_hole_wave = first_hole_wave(c.occupied, shells);
  return out;
}

template <int D>
FluctuationRecord measure_flash_errors(const FlashCluster<D>& cluster, double n, std::uint64_t seed = 0) {
  return measure_errors(cluster.occupied, n, seed);
}

}  // namespace idla
