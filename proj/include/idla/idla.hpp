#pragma once

// Internal DLA: explorers leave the origin one at a time and settle at the
// first site outside the current cluster.
//
// Explorer k (0-based) walks with its own stream (seed, kWalk, k), so the
// trajectory of an explorer does not depend on how the others were scheduled.

#include <cstdint>
#include <limits>
#include <vector>

#include "idla/errors.hpp"
#include "idla/jump.hpp"
#include "idla/lattice.hpp"
#include "idla/random.hpp"
#include "idla/walk.hpp"

namespace idla {

template <int D>
struct SettleEvent {
  std::uint32_t explorer = 0;
  Point<D> site{};
  // Walk steps until settling for the step engine, macro-steps for the jump
  // engine (a cube jump counts as one).
  std::uint64_t time = 0;
};

template <int D>
struct Cluster {
  Region<D> occupied;
  std::vector<SettleEvent<D>> settles;  // in settling order

  std::size_t size() const { return occupied.size(); }
  bool contains(const Point<D>& p) const { return occupied.contains(p); }
};

struct GrowOptions {
  Engine engine = Engine::kStep;
  std::uint64_t step_cap = kDefaultStepCap;
};

inline RandomStream explorer_stream(std::uint64_t seed, std::uint64_t explorer) {
  return RandomStream::for_domain(seed, StreamDomain::kWalk, explorer);
}

namespace detail {

// Tracks q = min squared norm over unoccupied sites, so that every site with
// norm^2 < q is known to be occupied.
template <int D>
class FilledBall {
 public:
  explicit FilledBall(double reach) : reach_(reach) { order_ = sites_by_norm<D>(reach); }

  void update(const Region<D>& occupied) {
    while (next_ < order_.size() && occupied.contains(order_[next_])) ++next_;
    if (next_ == order_.size()) {
      // Ran past the precomputed list: extend it.
      reach_ *= 1.5;
      order_ = sites_by_norm<D>(reach_);
      update(occupied);
    }
  }

  // All sites of B(0, radius()) are occupied.
  double radius() const { return std::sqrt(static_cast<double>(norm2(order_[next_]))); }

 private:
  double reach_;
  std::vector<Point<D>> order_;
  std::size_t next_ = 0;
};

// Runs an explorer until it leaves the cluster or, when `stop_radius` is
// finite, first reaches a site with norm >= stop_radius. Returns true if it
// settled (leaving the cluster wins a tie).
template <int D>
bool idla_walk(Point<D>& pos, RandomStream& rng, std::uint64_t& time, const Region<D>& occupied,
               const FilledBall<D>* filled, double stop_radius, const GrowOptions& opt) {
  const bool bounded = std::isfinite(stop_radius);
  std::uint64_t budget = opt.step_cap;
  for (;;) {
    if (!occupied.contains(pos)) return true;
    if (bounded && !norm2_below(norm2(pos), stop_radius)) return false;
    if (budget-- == 0)
      throw StepCapExceeded("idla: explorer exceeded " + std::to_string(opt.step_cap) + " steps at " + to_string(pos));
    int m = 0;
    if (filled != nullptr) {
      double free_radius = filled->radius();
      if (bounded) free_radius = std::min(free_radius, stop_radius);
      m = cube_inside_ball(pos, Point<D>{}, free_radius);
    }
    macro_step(pos, m, rng);
    ++time;
  }
}

}  // namespace detail

// Sequential IDLA with N explorers.
template <int D>
Cluster<D> grow_idla(std::size_t n_explorers, std::uint64_t seed, const GrowOptions& opt = {}) {
  Cluster<D> c;
  c.settles.reserve(n_explorers);
  const double reach = std::pow(static_cast<double>(n_explorers) / unit_ball_volume(D), 1.0 / D) + 4;
  std::unique_ptr<detail::FilledBall<D>> filled;
  if (opt.engine == Engine::kJump) filled = std::make_unique<detail::FilledBall<D>>(reach);
  for (std::size_t k = 0; k < n_explorers; ++k) {
    Point<D> pos{};
    auto rng = explorer_stream(seed, k);
    std::uint64_t time = 0;
    detail::idla_walk(pos, rng, time, c.occupied, filled.get(), std::numeric_limits<double>::infinity(), opt);
    c.occupied.insert(pos);
    c.settles.push_back({static_cast<std::uint32_t>(k), pos, time});
    if (filled) filled->update(c.occupied);
  }
  return c;
}

// IDLA organized in waves: during wave w all unsettled explorers, in label
// order, walk until they settle or first reach norm >= radii[w]; a last wave
// runs without a stop radius. Same law as grow_idla; with no radii it is the
// same construction pathwise.
template <int D>
Cluster<D> grow_idla_waves(std::size_t n_explorers, const std::vector<double>& radii, std::uint64_t seed,
                           const GrowOptions& opt = {}) {
  for (std::size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] > radii[i - 1])) throw ConfigError("grow_idla_waves: radii must increase");
  Cluster<D> c;
  struct Pending {
    std::uint32_t explorer;
    Point<D> pos;
    RandomStream rng;
    std::uint64_t time;
  };
  std::vector<Pending> pending;
  pending.reserve(n_explorers);
  for (std::size_t k = 0; k < n_explorers; ++k)
    pending.push_back({static_cast<std::uint32_t>(k), Point<D>{}, explorer_stream(seed, k), 0});
  const double reach = std::pow(static_cast<double>(n_explorers) / unit_ball_volume(D), 1.0 / D) + 4;
  std::unique_ptr<detail::FilledBall<D>> filled;
  if (opt.engine == Engine::kJump) filled = std::make_unique<detail::FilledBall<D>>(reach);

  for (std::size_t w = 0; w <= radii.size() && !pending.empty(); ++w) {
    const double stop = w < radii.size() ? radii[w] : std::numeric_limits<double>::infinity();
    std::vector<Pending> next;
    for (auto& e : pending) {
      if (detail::idla_walk(e.pos, e.rng, e.time, c.occupied, filled.get(), stop, opt)) {
        c.occupied.insert(e.pos);
        c.settles.push_back({e.explorer, e.pos, e.time});
        if (filled) filled->update(c.occupied);
      } else {
        next.push_back(e);
      }
    }
    pending.swap(next);
  }
  return c;
}

struct FluctuationRecord {
  double n = 0;
  std::int64_t explorers = 0;
  double delta_inner = 0;
  double delta_outer = 0;
  std::uint64_t seed = 0;
};

// delta_I = n - min{||y|| : y not in A}, delta_O = max(0, max{||y|| : y in A} - n).
template <int D>
FluctuationRecord measure_errors(const Region<D>& cluster, double n, std::uint64_t seed = 0) {
  const auto expected = ball_size<D>(n);
  if (static_cast<std::int64_t>(cluster.size()) != expected)
    throw ConfigError("measure_errors: cluster has " + std::to_string(cluster.size()) + " sites, |B(0,n)| = " +
                      std::to_string(expected));
  FluctuationRecord r;
  r.n = n;
  r.explorers = expected;
  r.seed = seed;
  std::int64_t max2 = 0;
  for (const auto& p : cluster) max2 = std::max(max2, norm2(p));
  r.delta_outer = std::max(0.0, std::sqrt(static_cast<double>(max2)) - n);
  // The cluster cannot cover more than its own size, so the first hole is
  // within the ball holding |A| + 1 sites.
  double reach = n + 2;
  for (;;) {
    for (const auto& p : sites_by_norm<D>(reach)) {
      if (!cluster.contains(p)) {
        r.delta_inner = n - norm(p);
        return r;
      }
    }
    reach *= 2;
  }
}

template <int D>
FluctuationRecord measure_errors(const Cluster<D>& cluster, double n, std::uint64_t seed = 0) {
  return measure_errors(cluster.occupied, n, seed);
}

}  // namespace idla
