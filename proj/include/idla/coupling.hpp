#pragma once

// Coupling of internal DLA with the flashing process.
//
// One shared sequence of walk increments U_1, U_2, ... is dealt out in program
// order. Loop 1 grows A(1..N); every increment moves walker i and, at the same
// time, one flashing trajectory S*_j whose current position equals S_i(t). When
// S*_j stands at one of its flashing times on an occupied site, the walk is
// handed to the flashing explorer j' stopped there (always if j' is not at a
// flashing time, otherwise to max(j, j')). Loop 2 then finishes every flashing
// trajectory in label order to build A*(N).
//
// Flash draws come from the same per-(explorer, shell) streams as
// grow_flashing, so a draw does not depend on when it is first needed.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "idla/errors.hpp"
#include "idla/flashing.hpp"
#include "idla/idla.hpp"
#include "idla/lattice.hpp"
#include "idla/random.hpp"

namespace idla {

enum class SiteColor : std::uint8_t { kRed, kBlue };

template <int D>
struct CouplingReport {
  // Indexed by explorer (0-based label).
  std::vector<std::uint64_t> t_bar;     // t_k at the end of loop 1
  std::vector<std::uint64_t> tau_star;  // t_k at the end of loop 2
  std::vector<Point<D>> bar_site;       // S*_k(t_bar_k), a site of A(N)
  std::vector<Point<D>> star_site;      // S*_k(tau*_k), a site of A*(N); psi_N maps bar to star
  std::vector<SiteColor> color;         // color of bar_site at the end of loop 1
  std::uint64_t increments = 0;         // increments drawn from the shared stream
  std::uint64_t idla_steps = 0;         // sum of tau_i
  std::uint64_t handoffs = 0;           // j changed on a red site
  std::uint64_t blue_handoffs = 0;      // j changed on a blue site (j' > j)
  std::size_t lemma_violations = 0;     // k with tau*_k < t_bar_k
};

template <int D>
struct CoupledRun {
  Cluster<D> idla;        // A(N), settle times tau_i
  FlashCluster<D> flash;  // A*(N), settle times tau*_k
  CouplingReport<D> report;
};

struct CouplingOptions {
  std::uint64_t step_cap = kDefaultStepCap;  // per walker (loop 1) and per flashing explorer (loop 2)
  bool check_each_explorer = true;           // assert the loop-1 identity after every walker
};

inline RandomStream coupling_stream(std::uint64_t seed) {
  return RandomStream::for_domain(seed, StreamDomain::kCoupling);
}

template <int D>
CoupledRun<D> run_coupled(std::size_t n_explorers, const ShellPartition& shells, std::uint64_t seed,
                          const CouplingOptions& opt = {}) {
  shells.require_flashing_widths();
  const std::size_t n = n_explorers;
  auto shared = coupling_stream(seed);

  std::vector<FlashTracker<D>> tracker;
  tracker.reserve(n);
  std::vector<Point<D>> pos(n);
  std::vector<std::uint64_t> t(n, 0);
  std::vector<char> flashing(n, 0);  // t_k is a flashing time for k

  auto observe = [&](std::size_t k) {
    const auto st = tracker[k].observe(pos[k]);
    flashing[k] = st == FlashTracker<D>::Status::kSigma && tracker[k].last_sigma().flashed;
  };
  CoupledRun<D> out;
  auto& rep = out.report;
  SiteGrid<D, std::int32_t> occupant(-1);

  auto check_identity = [&](std::size_t i) {
    // A(i) = {S*_1(t_1), ..., S*_i(t_i)} and |A(i)| = i.
    if (out.idla.occupied.size() != i + 1)
      throw InvariantViolation("coupling: |A(i)| != i after walker " + std::to_string(i));
    for (std::size_t k = 0; k <= i; ++k)
      if (occupant.get(pos[k]) != static_cast<std::int32_t>(k) || !out.idla.occupied.contains(pos[k]))
        throw InvariantViolation("coupling: A(i) is not {S*_k(t_k)} after walker " + std::to_string(i));
  };

  for (std::size_t i = 0; i < n; ++i) {
    tracker.emplace_back(&shells, seed, i);
    std::size_t j = i;
    Point<D> walker{};
    std::uint64_t time = 0;
    pos[j] = walker;
    observe(j);
    while (out.idla.occupied.contains(walker)) {
      if (flashing[j]) {
        const auto found = occupant.get(walker);
        if (found < 0 || static_cast<std::size_t>(found) == j || static_cast<std::size_t>(found) > i)
          throw InvariantViolation("coupling: no unique explorer j' at " + to_string(walker));
        const auto jp = static_cast<std::size_t>(found);
        std::size_t next = j;
        if (!flashing[jp]) {
          next = jp;
          ++rep.handoffs;
        } else if (jp > j) {
          next = jp;
          ++rep.blue_handoffs;
        }
        if (next != j) {
          // j stops here (at a flashing time, so the site is blue) and j'
          // takes over the walk.
          occupant.set(walker, static_cast<std::int32_t>(j));
          j = next;
        }
      }
      if (time++ == opt.step_cap)
        throw StepCapExceeded("coupling: walker " + std::to_string(i) + " exceeded " + std::to_string(opt.step_cap) +
                              " steps");
      const auto delta = static_cast<unsigned>(shared.below(kNeighborCount<D>));
      ++rep.increments;
      walker = neighbor(walker, delta);
      pos[j] = neighbor(pos[j], delta);
      ++t[j];
      observe(j);
    }
    out.idla.occupied.insert(walker);
    out.idla.settles.push_back({static_cast<std::uint32_t>(i), walker, time});
    occupant.set(walker, static_cast<std::int32_t>(j));
    rep.idla_steps += time;
    if (opt.check_each_explorer) check_identity(i);
  }

  rep.t_bar = t;
  rep.bar_site = pos;
  rep.color.resize(n);
  for (std::size_t k = 0; k < n; ++k) rep.color[k] = flashing[k] ? SiteColor::kBlue : SiteColor::kRed;

  for (std::size_t k = 0; k < n; ++k) {
    std::uint64_t budget = opt.step_cap;
    while (!flashing[k] || out.flash.occupied.contains(pos[k])) {
      if (budget-- == 0)
        throw StepCapExceeded("coupling: flashing explorer " + std::to_string(k) + " exceeded " +
                              std::to_string(opt.step_cap) + " steps");
      pos[k] = neighbor(pos[k], static_cast<unsigned>(shared.below(kNeighborCount<D>)));
      ++rep.increments;
      ++t[k];
      observe(k);
    }
    out.flash.occupied.insert(pos[k]);
    out.flash.settles.push_back({static_cast<std::uint32_t>(k), pos[k], t[k]});
  }

  rep.tau_star = t;
  rep.star_site = pos;
  for (std::size_t k = 0; k < n; ++k)
    if (rep.tau_star[k] < rep.t_bar[k]) ++rep.lemma_violations;
  if (shared.draws() != rep.increments) throw InvariantViolation("coupling: shared stream out of step");
  return out;
}

struct CorollaryRow {
  std::size_t k = 0;  // the union of S_j, j < k, is B(0, outer(k - 1))
  bool outer_hypothesis = false;  // A*(N) inside the union
  bool outer_conclusion = false;  // A(N) inside the union
  bool inner_hypothesis = false;  // union inside A*(N)
  bool inner_conclusion = false;  // union inside A(N)
  bool ok() const { return (!outer_hypothesis || outer_conclusion) && (!inner_hypothesis || inner_conclusion); }
};

template <int D>
struct CorollaryCheck {
  std::vector<CorollaryRow> rows;  // k = 1 .. last shell holding a site of either cluster, plus one
  std::size_t inclusion_violations = 0;
  // (k, l) pairs where S*_k(t_bar_k) is outside the first l shells but
  // S*_k(tau*_k) is inside them.
  std::size_t desired_violations = 0;
  bool psi_bijective = false;
  std::size_t lemma_violations = 0;
  std::uint64_t tau_star_total = 0;
  bool increments_match = false;  // increments drawn == sum of tau*_k
  bool idla_steps_match = false;  // sum of tau_i == sum of t_bar_k

  bool ok() const {
    return inclusion_violations == 0 && desired_violations == 0 && psi_bijective && lemma_violations == 0 &&
           increments_match && idla_steps_match;
  }
};

template <int D>
CorollaryCheck<D> check_corollary(const CoupledRun<D>& run, const ShellPartition& shells) {
  CorollaryCheck<D> c;
  const auto& rep = run.report;
  const std::size_t n = rep.t_bar.size();

  // Shell counts of each cluster.
  std::size_t last = 0;
  for (const auto& p : run.idla.occupied) last = std::max(last, shells.shell_of(p));
  for (const auto& p : run.flash.occupied) last = std::max(last, shells.shell_of(p));
  std::vector<std::int64_t> in_a(last + 1, 0), in_star(last + 1, 0);
  for (const auto& p : run.idla.occupied) ++in_a[shells.shell_of(p)];
  for (const auto& p : run.flash.occupied) ++in_star[shells.shell_of(p)];

  std::int64_t below_a = 0, below_star = 0;
  std::int64_t total_a = static_cast<std::int64_t>(run.idla.occupied.size());
  std::int64_t total_star = static_cast<std::int64_t>(run.flash.occupied.size());
  bool full_a = true, full_star = true;
  for (std::size_t k = 1; k <= last + 1; ++k) {
    const std::size_t j = k - 1;
    below_a += in_a[j];
    below_star += in_star[j];
    full_a = full_a && in_a[j] == shells.shell_volume<D>(j);
    full_star = full_star && in_star[j] == shells.shell_volume<D>(j);
    CorollaryRow r;
    r.k = k;
    r.outer_hypothesis = below_star == total_star;
    r.outer_conclusion = below_a == total_a;
    r.inner_hypothesis = full_star;
    r.inner_conclusion = full_a;
    if (!r.ok()) ++c.inclusion_violations;
    c.rows.push_back(r);
  }

  for (std::size_t k = 0; k < n; ++k) {
    // Outside the first l shells for l <= shell index of the site.
    const auto bar = shells.shell_of(rep.bar_site[k]);
    const auto star = shells.shell_of(rep.star_site[k]);
    if (star < bar) c.desired_violations += bar - star;
  }

  Region<D> image;
  bool bij = run.idla.occupied.size() == n && run.flash.occupied.size() == n;
  for (std::size_t k = 0; k < n && bij; ++k) {
    bij = run.idla.occupied.contains(rep.bar_site[k]) && run.flash.occupied.contains(rep.star_site[k]);
    bij = bij && image.insert(rep.star_site[k]);
  }
  Region<D> domain(rep.bar_site.begin(), rep.bar_site.end());
  c.psi_bijective = bij && domain.size() == n;

  c.lemma_violations = 0;
  std::uint64_t bar_total = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (rep.tau_star[k] < rep.t_bar[k]) ++c.lemma_violations;
    c.tau_star_total += rep.tau_star[k];
    bar_total += rep.t_bar[k];
  }
  c.increments_match = c.tau_star_total == rep.increments;
  c.idla_steps_match = bar_total == rep.idla_steps;
  return c;
}

}  // namespace idla
