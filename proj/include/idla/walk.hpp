#pragma once

// Simple random walk on Z^d: single steps, hitting times, empirical exit laws.
//
// Draw accounting: step() consumes exactly one draw from the walker's stream.

#include <cstdint>
#include <map>
#include <string>

#include "idla/errors.hpp"
#include "idla/lattice.hpp"
#include "idla/random.hpp"

namespace idla {

inline constexpr std::uint64_t kDefaultStepCap = 1'000'000'000ULL;

template <int D>
struct Walker {
  Point<D> position{};
  std::uint64_t steps = 0;
  RandomStream stream;

  Walker() = default;
  explicit Walker(RandomStream s, Point<D> start = {}) : position(start), stream(s) {}
};

template <int D>
struct HittingResult {
  Point<D> site{};
  std::uint64_t time = 0;
};

// Moves to a uniform neighbor; one draw.
template <int D>
const Point<D>& step(Walker<D>& w) {
  w.position = neighbor(w.position, w.stream.below(kNeighborCount<D>));
  ++w.steps;
  return w.position;
}

// First time t >= 0 (counted from the call) at which target(position) holds.
template <int D, typename Pred>
HittingResult<D> run_until_hit(Walker<D>& w, Pred&& target, std::uint64_t step_cap = kDefaultStepCap) {
  if (step_cap == 0) throw ConfigError("run_until_hit: step cap must be positive");
  std::uint64_t t = 0;
  while (!target(w.position)) {
    if (t == step_cap)
      throw StepCapExceeded("run_until_hit: no hit within " + std::to_string(step_cap) + " steps from " +
                            to_string(w.position));
    step(w);
    ++t;
  }
  return {w.position, t};
}

// Empirical law of the exit site from `region` for walks started at `start`.
// Keys are boundary sites, values are frequencies summing to 1.
template <int D>
std::map<Point<D>, double> exit_distribution(const Point<D>& start, const Region<D>& region, std::uint64_t samples,
                                             RandomStream& stream, std::uint64_t step_cap = kDefaultStepCap) {
  if (!region.contains(start)) throw ConfigError("exit_distribution: start must lie in the region");
  if (samples == 0) throw ConfigError("exit_distribution: need at least one sample");
  std::map<Point<D>, std::uint64_t> counts;
  for (std::uint64_t s = 0; s < samples; ++s) {
    Walker<D> w(stream, start);
    const auto hit = run_until_hit(w, [&](const Point<D>& p) { return !region.contains(p); }, step_cap);
    stream = w.stream;
    ++counts[hit.site];
  }
  std::map<Point<D>, double> out;
  for (const auto& [site, c] : counts) out[site] = static_cast<double>(c) / static_cast<double>(samples);
  return out;
}

}  // namespace idla
