#pragma once

// Verifiers for the probabilistic lemmas and the desk-scale experiments:
// Bernoulli MGF comparison, coupon-collector tail, fluctuation scaling,
// uniform hitting of cells, and the potential-theory oracle checks.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "idla/errors.hpp"
#include "idla/flashing.hpp"
#include "idla/idla.hpp"
#include "idla/jump.hpp"
#include "idla/potential.hpp"
#include "idla/random.hpp"
#include "idla/stats.hpp"
#include "idla/walk.hpp"

namespace idla {

// ---------------------------------------------------------------------------
// Worker pool.

// IDLA_THREADS if set and positive, else the hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("IDLA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
    throw ConfigError(std::string("IDLA_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs f(i) for i in [0, n) on `threads` workers. Results must be written by
// index; the first exception is rethrown after all workers stop.
template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex m;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Bernoulli MGF comparison.

using Quad = boost::multiprecision::cpp_bin_float_quad;

struct BernoulliPair {
  std::vector<double> p;  // success probabilities of X_1..X_n (S)
  std::vector<double> q;  // success probabilities of Y_1..Y_m (S')
  double kappa = 2;       // used for t < 0: needs sup q <= (kappa - 1) / kappa
  double t = 0;
};

struct MgfCheck {
  enum class Status { kHolds, kViolated, kSkipped };
  Status status = Status::kSkipped;
  std::string branch;  // "positive", "negative" or the reason for skipping
  Quad lhs = 0;
  Quad rhs = 0;
  double log_margin = 0;  // log rhs - log lhs
};

// E[exp(t(S - ES))] / E[exp(t(S' - ES'))] against exp(f(t) E[S - S'] + c g(t) sum q_i^2),
// with f(t) = e^t - 1 - t, g(t) = (e^t - 1)^2 and c = 1 for 0 <= t <= log 2,
// c = kappa / 2 for t <= 0. Evaluated in binary128.
inline MgfCheck verify_mgf_lemma(const BernoulliPair& pair) {
  MgfCheck r;
  for (double v : pair.p)
    if (!(v >= 0 && v <= 1)) throw ConfigError("verify_mgf_lemma: probability outside [0, 1]");
  for (double v : pair.q)
    if (!(v >= 0 && v <= 1)) throw ConfigError("verify_mgf_lemma: probability outside [0, 1]");
  const Quad t = pair.t;
  Quad c;
  if (pair.t >= 0 && t <= log(Quad(2))) {
    r.branch = "positive";
    c = 1;
  } else if (pair.t < 0) {
    if (!(pair.kappa > 1)) {
      r.branch = "skip: kappa must exceed 1";
      return r;
    }
    const double sup_q = pair.q.empty() ? 0.0 : *std::max_element(pair.q.begin(), pair.q.end());
    if (Quad(sup_q) > (Quad(pair.kappa) - 1) / Quad(pair.kappa)) {
      r.branch = "skip: sup q exceeds (kappa - 1) / kappa";
      return r;
    }
    r.branch = "negative";
    c = Quad(pair.kappa) / 2;
  } else {
    r.branch = "skip: t above log 2";
    return r;
  }
  const Quad et = exp(t) - 1;
  auto factor = [&](double prob) {
    const Quad pq = prob;
    return exp(-t * pq) * (1 + pq * et);
  };
  Quad num = 1, den = 1, mean_diff = 0, sq = 0;
  for (double v : pair.p) {
    num *= factor(v);
    mean_diff += v;
  }
  for (double v : pair.q) {
    den *= factor(v);
    mean_diff -= v;
    sq += Quad(v) * Quad(v);
  }
  const Quad f = et - t;
  const Quad g = et * et;
  r.lhs = num / den;
  r.rhs = exp(f * mean_diff + c * g * sq);
  r.log_margin = static_cast<double>(log(r.rhs) - log(r.lhs));
  r.status = r.lhs <= r.rhs ? MgfCheck::Status::kHolds : MgfCheck::Status::kViolated;
  return r;
}

struct MgfSweep {
  std::size_t instances = 0, holds = 0, violated = 0, skipped = 0;
  double min_margin = std::numeric_limits<double>::infinity();
};

// Random instances with n, m <= max_terms; t uniform on [-3, log 2]; for t < 0
// kappa is uniform on (1, 10] and the q_i are drawn below (kappa - 1) / kappa.
inline MgfSweep mgf_sweep(std::size_t instances, std::uint64_t seed, int max_terms = 50) {
  MgfSweep s;
  auto rng = RandomStream::for_domain(seed, StreamDomain::kAudit, 0x6d6766);
  for (std::size_t i = 0; i < instances; ++i) {
    BernoulliPair pair;
    pair.t = -3.0 + rng.uniform() * (3.0 + std::log(2.0));
    pair.kappa = 1.0 + 9.0 * rng.uniform_open();
    const double q_cap = pair.t < 0 ? (pair.kappa - 1) / pair.kappa : 1.0;
    const auto n = rng.below(static_cast<std::uint64_t>(max_terms) + 1);
    const auto m = rng.below(static_cast<std::uint64_t>(max_terms) + 1);
    for (std::uint64_t k = 0; k < n; ++k) pair.p.push_back(rng.uniform());
    for (std::uint64_t k = 0; k < m; ++k) pair.q.push_back(q_cap * rng.uniform());
    const auto r = verify_mgf_lemma(pair);
    ++s.instances;
    switch (r.status) {
      case MgfCheck::Status::kHolds:
        ++s.holds;
        s.min_margin = std::min(s.min_margin, r.log_margin);
        break;
      case MgfCheck::Status::kViolated:
        ++s.violated;
        s.min_margin = std::min(s.min_margin, r.log_margin);
        break;
      case MgfCheck::Status::kSkipped:
        ++s.skipped;
        break;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Coupon collector.

struct CouponConfig {
  std::size_t L = 1;
  std::vector<double> probs;  // per item; the remaining mass is the null coupon
  double A = 1;

  double alpha1() const { return *std::min_element(probs.begin(), probs.end()) * static_cast<double>(L); }
  double alpha2() const { return *std::max_element(probs.begin(), probs.end()) * static_cast<double>(L); }
  double null_mass() const { return std::max(0.0, 1.0 - std::accumulate(probs.begin(), probs.end(), 0.0)); }
  // 0 < A < log(L) / (4 alpha2).
  bool in_range() const { return A > 0 && A < std::log(static_cast<double>(L)) / (4 * alpha2()); }

  void validate() const {
    if (L == 0 || probs.size() != L) throw ConfigError("CouponConfig: need one probability per item");
    double total = 0;
    for (double p : probs) {
      if (!(p > 0 && p <= 1)) throw ConfigError("CouponConfig: item probabilities must lie in (0, 1]");
      total += p;
    }
    if (total > 1 + 1e-12) throw ConfigError("CouponConfig: item probabilities sum above 1");
    if (!(A > 0)) throw ConfigError("CouponConfig: A must be positive");
  }

  static CouponConfig uniform(std::size_t L, double A) { return {L, std::vector<double>(L, 1.0 / static_cast<double>(L)), A}; }

  // Item probabilities uniform on [lo / L, hi / L], rescaled to total mass
  // `mass` when they would exceed it.
  static CouponConfig random(std::size_t L, double lo, double hi, double mass, double A, std::uint64_t seed) {
    auto rng = RandomStream::for_domain(seed, StreamDomain::kCoupon, L);
    CouponConfig c{L, {}, A};
    double total = 0;
    for (std::size_t i = 0; i < L; ++i) {
      c.probs.push_back((lo + (hi - lo) * rng.uniform()) / static_cast<double>(L));
      total += c.probs.back();
    }
    if (total > mass)
      for (auto& p : c.probs) p *= mass / total;
    return c;
  }
};

// exp(-alpha1^2 A^2 e^{-2 alpha2 A} sqrt(L) / 4).
inline double coupon_bound(const CouponConfig& c) {
  const double a1 = c.alpha1(), a2 = c.alpha2();
  return std::exp(-a1 * a1 * c.A * c.A * std::exp(-2 * a2 * c.A) * std::sqrt(static_cast<double>(c.L)) / 4);
}

struct CouponResult {
  std::uint64_t trials = 0;
  std::uint64_t completed = 0;  // trials with tau_L < A L
  double estimate = 0;
  Interval wilson;  // 95%
  double bound = 0;
  bool in_range = false;  // A inside the lemma's range
  bool holds = false;     // Wilson lower end <= bound
};

inline CouponResult simulate_coupon(const CouponConfig& c, std::uint64_t trials, std::uint64_t seed) {
  c.validate();
  std::vector<double> weights = c.probs;
  weights.push_back(c.null_mass());
  const AliasTable table(weights);
  // tau_L < A L  <=>  the album is complete after the largest integer below A L.
  const double al = c.A * static_cast<double>(c.L);
  const auto budget = static_cast<std::uint64_t>(std::ceil(al) - 1);
  CouponResult r;
  r.trials = trials;
  auto rng = RandomStream::for_domain(seed, StreamDomain::kCoupon, c.L, 1);
  std::vector<std::uint64_t> stamp(c.L, 0);
  for (std::uint64_t trial = 1; trial <= trials; ++trial) {
    std::size_t have = 0;
    for (std::uint64_t k = 0; k < budget && have < c.L; ++k) {
      const auto item = table.sample(rng);
      if (item < c.L && stamp[item] != trial) {
        stamp[item] = trial;
        ++have;
      }
    }
    r.completed += have == c.L;
  }
  r.estimate = static_cast<double>(r.completed) / static_cast<double>(trials);
  r.wilson = wilson_interval(r.completed, trials);
  r.bound = coupon_bound(c);
  r.in_range = c.in_range();
  r.holds = r.wilson.lo <= r.bound;
  return r;
}

// ---------------------------------------------------------------------------
// Fluctuation scaling.

enum class Model { kIdla, kFlashing };

inline std::string to_string(Model m) { return m == Model::kIdla ? "idla" : "flashing"; }

inline Model parse_model(const std::string& s) {
  if (s == "idla") return Model::kIdla;
  if (s == "flashing") return Model::kFlashing;
  throw ConfigError("unknown model '" + s + "' (idla | flashing)");
}

inline constexpr std::size_t kMinScalingSeeds = 30;

struct ScalingOptions {
  Model model = Model::kIdla;
  int d = 2;
  std::vector<double> radii;
  std::size_t seeds = 100;
  double h = 16;  // constant shell width (flashing)
  Engine engine = Engine::kJump;
  std::uint64_t seed = 1;
  unsigned threads = 0;               // 0: worker_count()
  std::uint64_t max_total_steps = 0;  // 0: unlimited
  int bootstrap = 1000;
  // Bracket fit for flashing: constants fitted on `calibration`, checked on
  // `holdout`; both empty means fit on every radius and check nothing.
  std::vector<double> calibration;
  std::vector<double> holdout;
};

struct ScalingRecord {
  FluctuationRecord errors;
  std::size_t radius_index = 0;
  std::uint64_t steps = 0;  // walk steps or macro-steps, summed over explorers
};

struct RadiusSummary {
  double n = 0;
  std::int64_t explorers = 0;
  std::size_t runs = 0;
  double mean_inner = 0, sd_inner = 0;
  double mean_outer = 0, sd_outer = 0;
};

struct ExponentFit {
  bool defined = false;
  double slope = 0;
  Interval ci;  // 95% percentile bootstrap
};

struct BracketRow {
  double n = 0;
  double mean_inner = 0;
  double lower = 0;  // a h log h
  double upper = 0;  // b h log n
  bool inside = false;
};

struct BracketFit {
  bool defined = false;
  double a = 0;  // largest a with a h log h <= mean delta_I on the calibration radii
  double b = 0;  // smallest b with mean delta_I <= b h log n on the calibration radii
  double ls_logn = 0;  // least-squares multiple of h log n
  double ls_logh = 0;  // least-squares multiple of h log h
  std::vector<BracketRow> holdout;
  bool holds = false;  // every holdout row inside, a > 0, b > 0
};

struct ScalingReport {
  ScalingOptions options;
  std::vector<ScalingRecord> records;  // ordered by (radius, seed)
  std::vector<RadiusSummary> summaries;
  ExponentFit inner, outer;
  BracketFit bracket;
  bool complete = true;
  std::string ci_method;
};

inline std::uint64_t cell_seed(std::uint64_t base, std::size_t radius_index, std::size_t run) {
  return RandomStream::for_domain(base, StreamDomain::kSeeds, radius_index, run).next_u64();
}

namespace detail {

template <int D>
ScalingRecord scaling_cell(const ScalingOptions& o, std::size_t ri, std::size_t run) {
  const double n = o.radii[ri];
  const auto explorers = static_cast<std::size_t>(ball_size<D>(n));
  const auto seed = cell_seed(o.seed, ri, run);
  ScalingRecord rec;
  rec.radius_index = ri;
  if (o.model == Model::kIdla) {
    const auto c = grow_idla<D>(explorers, seed, {o.engine});
    rec.errors = measure_errors(c, n, seed);
    for (const auto& s : c.settles) rec.steps += s.time;
  } else {
    const auto shells = ShellPartition::constant(o.h, n);
    FlashOptions fo;
    fo.engine = o.engine;
    fo.record_history = false;
    const auto c = grow_flashing<D>(explorers, shells, seed, fo);
    rec.errors = measure_flash_errors(c, n, seed);
    for (const auto& s : c.settles) rec.steps += s.time;
  }
  return rec;
}

inline ExponentFit fit_exponent(const std::vector<double>& radii, const std::vector<std::vector<double>>& values,
                                int resamples, std::uint64_t seed) {
  ExponentFit fit;
  if (radii.size() < 2) return fit;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    const double m = mean(values[i]);
    if (!(m > 0)) return fit;  // log undefined
    x.push_back(std::log(radii[i]));
    y.push_back(std::log(m));
  }
  fit.defined = true;
  fit.slope = ols(x, y).slope;
  auto rng = RandomStream::for_domain(seed, StreamDomain::kBootstrap);
  std::vector<double> slopes;
  slopes.reserve(static_cast<std::size_t>(resamples));
  for (int b = 0; b < resamples; ++b) {
    std::vector<double> yb;
    bool ok = true;
    for (const auto& v : values) {
      double s = 0;
      for (std::size_t k = 0; k < v.size(); ++k) s += v[rng.below(v.size())];
      s /= static_cast<double>(v.size());
      if (!(s > 0)) ok = false;
      yb.push_back(ok ? std::log(s) : 0.0);
    }
    if (ok) slopes.push_back(ols(x, yb).slope);
  }
  if (slopes.empty()) {
    fit.ci = {fit.slope, fit.slope};
  } else {
    fit.ci = {quantile(slopes, 0.025), quantile(slopes, 0.975)};
  }
  return fit;
}

inline BracketFit fit_bracket(const ScalingOptions& o, const std::vector<RadiusSummary>& sums) {
  BracketFit f;
  const double h = o.h;
  auto mean_at = [&](double n) {
    for (const auto& s : sums)
      if (s.n == n) return s.mean_inner;
    throw ConfigError("scaling: bracket radius " + std::to_string(n) + " is not among the radii");
  };
  std::vector<double> cal = o.calibration;
  if (cal.empty())
    for (const auto& s : sums) cal.push_back(s.n);
  if (cal.empty()) return f;
  f.defined = true;
  f.a = std::numeric_limits<double>::infinity();
  f.b = 0;
  std::vector<double> xn, xh, y;
  for (double n : cal) {
    const double m = mean_at(n);
    f.a = std::min(f.a, m / (h * std::log(h)));
    f.b = std::max(f.b, m / (h * std::log(n)));
    xn.push_back(h * std::log(n));
    xh.push_back(h * std::log(h));
    y.push_back(m);
  }
  f.ls_logn = fit_multiple(xn, y);
  f.ls_logh = fit_multiple(xh, y);
  f.holds = f.a > 0 && f.b > 0;
  for (double n : o.holdout) {
    BracketRow r;
    r.n = n;
    r.mean_inner = mean_at(n);
    r.lower = f.a * h * std::log(h);
    r.upper = f.b * h * std::log(n);
    r.inside = r.lower <= r.mean_inner && r.mean_inner <= r.upper;
    f.holds = f.holds && r.inside;
    f.holdout.push_back(r);
  }
  return f;
}

}  // namespace detail

inline ScalingReport run_scaling_experiment(const ScalingOptions& o) {
  if (o.radii.empty()) throw ConfigError("scaling: no radii");
  for (std::size_t i = 1; i < o.radii.size(); ++i)
    if (!(o.radii[i] > o.radii[i - 1])) throw ConfigError("scaling: radii must increase");
  if (o.seeds < kMinScalingSeeds)
    throw ConfigError("scaling: need at least " + std::to_string(kMinScalingSeeds) + " seeds per radius");
  if (o.model == Model::kFlashing && o.h < kMinFlashWidth) throw ConfigError("scaling: flashing needs h >= 16");
  if (o.bootstrap < 1) throw ConfigError("scaling: bootstrap needs at least one resample");

  ScalingReport rep;
  rep.options = o;
  rep.ci_method = "percentile bootstrap over seeds within each radius, " + std::to_string(o.bootstrap) +
                  " resamples, OLS of log mean delta on log n";
  const unsigned threads = o.threads > 0 ? o.threads : worker_count();
  std::uint64_t total_steps = 0;
  std::vector<std::vector<double>> inner, outer;
  std::vector<double> done_radii;
  for (std::size_t ri = 0; ri < o.radii.size(); ++ri) {
    std::vector<ScalingRecord> cell(o.seeds);
    with_dimension(o.d, [&](auto dim) {
      constexpr int D = decltype(dim)::value;
      parallel_for(o.seeds, threads, [&](std::size_t s) { cell[s] = detail::scaling_cell<D>(o, ri, s); });
    });
    RadiusSummary sum;
    sum.n = o.radii[ri];
    sum.runs = cell.size();
    std::vector<double> in, out;
    for (const auto& r : cell) {
      sum.explorers = r.errors.explorers;
      in.push_back(r.errors.delta_inner);
      out.push_back(r.errors.delta_outer);
      total_steps += r.steps;
      rep.records.push_back(r);
    }
    sum.mean_inner = mean(in);
    sum.sd_inner = sample_sd(in);
    sum.mean_outer = mean(out);
    sum.sd_outer = sample_sd(out);
    rep.summaries.push_back(sum);
    inner.push_back(in);
    outer.push_back(out);
    done_radii.push_back(o.radii[ri]);
    if (o.max_total_steps > 0 && total_steps > o.max_total_steps && ri + 1 < o.radii.size()) {
      rep.complete = false;
      break;
    }
  }
  rep.inner = detail::fit_exponent(done_radii, inner, o.bootstrap, o.seed);
  rep.outer = detail::fit_exponent(done_radii, outer, o.bootstrap, o.seed + 1);
  if (o.model == Model::kFlashing && rep.complete) rep.bracket = detail::fit_bracket(o, rep.summaries);
  return rep;
}

// ---------------------------------------------------------------------------
// Uniform hitting of cells.

struct UniformHittingOptions {
  std::size_t anchors = 8;
  std::uint64_t samples = 1'000'000;
  double ratio_ceiling = 25;
  double min_expected = 20;  // smallest acceptable hit count on a cell site
  std::uint64_t seed = 1;
  Engine engine = Engine::kJump;
  unsigned threads = 0;
};

template <int D>
struct CellSiteHits {
  std::size_t anchor = 0;
  Point<D> site{};
  std::uint64_t count = 0;
  double weight = 0;  // count / samples * h^d
};

template <int D>
struct AnchorHits {
  Point<D> anchor{};
  std::size_t cell_sites = 0;
  double min_weight = 0, max_weight = 0;
  std::uint64_t min_count = 0;
  std::uint64_t x_count = 0;       // samples with X = 1
  std::uint64_t anchor_count = 0;  // samples stopping at the anchor
  std::uint64_t outside = 0;       // samples stopping outside the cell
  bool x_at_anchor = true;         // every X = 1 sample stopped at the anchor
  bool floor_ok = false;           // X branch consistent with P(stop at anchor) >= h^-d
};

template <int D>
struct UniformHittingReport {
  std::size_t shell = 0;
  double h = 0;
  std::uint64_t samples = 0;
  std::vector<AnchorHits<D>> anchors;
  std::vector<CellSiteHits<D>> sites;  // ordered by (anchor, site)
  double global_min = 0, global_max = 0, ratio = 0;
  bool asserted = false;  // enough samples on every cell site to judge
  bool floor_ok = false;
  bool in_band = false;
  bool pass() const { return asserted && floor_ok && in_band; }
};

// Anchors spread over Sigma_j: evenly spaced indices of the lexicographic list.
template <int D>
std::vector<Point<D>> spread_anchors(const ShellPartition& shells, std::size_t j, std::size_t count) {
  const auto sigma = sigma_sites<D>(shells, j);
  if (count == 0 || count > sigma.size()) throw ConfigError("spread_anchors: bad anchor count");
  std::vector<Point<D>> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(sigma[k * sigma.size() / count]);
  return out;
}

template <int D>
UniformHittingReport<D> uniform_hitting_audit(const ShellPartition& shells, std::size_t j,
                                              const std::vector<Point<D>>& anchors,
                                              const UniformHittingOptions& opt = {}) {
  if (j == 0) throw ConfigError("uniform_hitting_audit: needs a shell j >= 1");
  if (opt.samples == 0) throw ConfigError("uniform_hitting_audit: need samples");
  const auto sigma = sigma_sites<D>(shells, j);
  const Region<D> sigma_set(sigma.begin(), sigma.end());
  for (const auto& a : anchors)
    if (!sigma_set.contains(a)) throw ConfigError("uniform_hitting_audit: anchor " + to_string(a) + " not on Sigma_j");
  const double h = shells.width(j);
  const double hd = std::pow(h, D);
  const auto shell_sites = enumerate_annulus<D>(Annulus{shells.inner(j), shells.outer(j)});

  UniformHittingReport<D> rep;
  rep.shell = j;
  rep.h = h;
  rep.samples = opt.samples;
  rep.anchors.resize(anchors.size());
  std::vector<std::vector<CellSiteHits<D>>> per_anchor(anchors.size());
  const unsigned threads = opt.threads > 0 ? opt.threads : worker_count();
  parallel_for(anchors.size(), threads, [&](std::size_t a) {
    const auto& z = anchors[a];
    Region<D> cell;
    for (const auto& s : shell_sites)
      if (in_cell(shells, j, z, s)) cell.insert(s);
    std::vector<std::uint64_t> counts(cell.size(), 0);
    AnchorHits<D> ah;
    ah.anchor = z;
    ah.cell_sites = cell.size();
    auto rng = RandomStream::for_domain(opt.seed, StreamDomain::kAudit, j, a);
    for (std::uint64_t s = 0; s < opt.samples; ++s) {
      const auto draw = draw_flash(rng, j, h, D);
      const auto ev = flash_stop(shells, j, z, draw, rng, opt.engine);
      if (draw.x) {
        ++ah.x_count;
        ah.x_at_anchor = ah.x_at_anchor && ev.stop == z;
      }
      if (ev.stop == z) ++ah.anchor_count;
      const auto idx = cell.index_of(ev.stop);
      if (idx >= 0)
        ++counts[static_cast<std::size_t>(idx)];
      else
        ++ah.outside;
    }
    const double inv = hd / static_cast<double>(opt.samples);
    ah.min_weight = std::numeric_limits<double>::infinity();
    ah.min_count = std::numeric_limits<std::uint64_t>::max();
    for (std::size_t i = 0; i < cell.size(); ++i) {
      const double w = static_cast<double>(counts[i]) * inv;
      ah.min_weight = std::min(ah.min_weight, w);
      ah.max_weight = std::max(ah.max_weight, w);
      ah.min_count = std::min(ah.min_count, counts[i]);
      per_anchor[a].push_back({a, cell[i], counts[i], w});
    }
    std::sort(per_anchor[a].begin(), per_anchor[a].end(),
              [](const CellSiteHits<D>& x, const CellSiteHits<D>& y) { return x.site < y.site; });
    // The X branch alone puts mass h^-d on the anchor: every X = 1 sample must
    // stop there, and the anchor frequency must be compatible with >= h^-d.
    const auto x_ci = wilson_interval(ah.x_count, opt.samples, 0.999);
    const auto anchor_ci = wilson_interval(ah.anchor_count, opt.samples, 0.999);
    ah.floor_ok = ah.x_at_anchor && ah.anchor_count >= ah.x_count && x_ci.contains(1.0 / hd) &&
                  anchor_ci.hi >= 1.0 / hd;
    rep.anchors[a] = ah;
  });

  rep.global_min = std::numeric_limits<double>::infinity();
  rep.asserted = true;
  rep.floor_ok = true;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const auto& ah = rep.anchors[a];
    rep.global_min = std::min(rep.global_min, ah.min_weight);
    rep.global_max = std::max(rep.global_max, ah.max_weight);
    rep.asserted = rep.asserted && static_cast<double>(ah.min_count) >= opt.min_expected;
    rep.floor_ok = rep.floor_ok && ah.floor_ok;
    for (const auto& s : per_anchor[a]) rep.sites.push_back(s);
  }
  rep.ratio = rep.global_min > 0 ? rep.global_max / rep.global_min : std::numeric_limits<double>::infinity();
  rep.in_band = rep.global_min > 0 && rep.ratio <= opt.ratio_ceiling;
  return rep;
}

// ---------------------------------------------------------------------------
// Potential-theory oracle checks.

struct PotentialAudit {
  double n = 0;
  int d = 0;
  std::size_t sites = 0;
  double symmetry_error = 0;
  double min_entry = 0;
  double exit_sum_error = 0;  // max over starting sites of |sum of the exit law - 1|
  double exact_exit_time = 0;  // E_0[H] as a column sum of G
  double mc_mean = 0, mc_se = 0;
  std::uint64_t walks = 0;
  bool pass = false;
};

template <int D>
PotentialAudit potential_audit(double n, std::uint64_t walks, std::uint64_t seed) {
  const auto ball = enumerate_ball<D>(Point<D>{}, n);
  const auto g = solve_green(ball);
  PotentialAudit a;
  a.n = n;
  a.d = D;
  a.sites = ball.size();
  a.symmetry_error = g.symmetry_error();
  a.min_entry = g.min_entry();
  for (const auto& y : ball) {
    double total = 0;
    for (const auto& [site, p] : g.exit_law(y)) total += p;
    a.exit_sum_error = std::max(a.exit_sum_error, std::abs(total - 1));
  }
  a.exact_exit_time = g.expected_exit_time(Point<D>{});
  a.walks = walks;
  Walker<D> w(RandomStream::for_domain(seed, StreamDomain::kAudit, 0x706f74));
  std::vector<double> times;
  times.reserve(walks);
  for (std::uint64_t i = 0; i < walks; ++i) {
    w.position = Point<D>{};
    times.push_back(static_cast<double>(run_until_hit(w, [&](const Point<D>& p) { return !ball.contains(p); }).time));
  }
  a.mc_mean = mean(times);
  a.mc_se = sample_sd(times) / std::sqrt(static_cast<double>(walks));
  a.pass = a.symmetry_error <= 1e-10 && a.min_entry >= -1e-10 && a.exit_sum_error <= 1e-9 &&
           std::abs(a.mc_mean - a.exact_exit_time) <= 3 * a.mc_se;
  return a;
}

struct RadiusValue {
  double n = 0;
  double delta = 0;
  double value = 0;
};

struct MeanValueStudy {
  int d = 0;
  std::vector<RadiusValue> trend;        // max rim discrepancy on the trend radii
  std::vector<RadiusValue> calibration;  // ... on the calibration radii
  std::vector<RadiusValue> holdout;
  double slope = 0;
  double slope_lower95 = 0;  // one-sided 95% lower confidence bound (Student t)
  bool trend_ok = false;     // slope > 0 not significant at 5%
  double k_a = 0;            // max over calibration radii
  bool holdout_ok = false;   // every holdout value <= k_a
  bool holdout_flag = false; // holdout above 2 k_a
  bool pass() const { return trend_ok && holdout_ok; }
};

namespace detail {

inline void slope_with_bound(const std::vector<RadiusValue>& pts, double& slope, double& lower) {
  std::vector<double> x, y;
  for (const auto& p : pts) {
    x.push_back(p.n);
    y.push_back(p.value);
  }
  const auto fit = ols(x, y);
  slope = fit.slope;
  if (pts.size() < 3) {
    lower = -std::numeric_limits<double>::infinity();
    return;
  }
  const double mx = mean(x);
  double sxx = 0, sse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    sse += r * r;
  }
  const double dof = static_cast<double>(x.size() - 2);
  const double se = std::sqrt(sse / dof / sxx);
  const double tq = boost::math::quantile(boost::math::students_t(dof), 0.95);
  lower = slope - tq * se;
}

}  // namespace detail

template <int D>
MeanValueStudy mean_value_study(const std::vector<double>& trend, const std::vector<double>& calibration,
                                const std::vector<double>& holdout) {
  MeanValueStudy s;
  s.d = D;
  auto eval = [](double n) {
    const auto spec = AnnulusSpec::standard(n);
    return RadiusValue{n, spec.delta, MeanValueOracle<D>(spec).max_discrepancy()};
  };
  std::map<double, RadiusValue> cache;
  auto get = [&](double n) {
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, eval(n)).first;
    return it->second;
  };
  for (double n : trend) s.trend.push_back(get(n));
  for (double n : calibration) s.calibration.push_back(get(n));
  for (double n : holdout) s.holdout.push_back(get(n));
  if (s.trend.size() >= 2) {
    detail::slope_with_bound(s.trend, s.slope, s.slope_lower95);
    s.trend_ok = s.slope_lower95 <= 0;
  }
  for (const auto& v : s.calibration) s.k_a = std::max(s.k_a, v.value);
  s.holdout_ok = !s.calibration.empty();
  for (const auto& v : s.holdout) {
    s.holdout_ok = s.holdout_ok && v.value <= s.k_a;
    s.holdout_flag = s.holdout_flag || v.value > 2 * s.k_a;
  }
  return s;
}

struct AnnulusStudyRow {
  double n = 0;
  double delta = 0;
  double worst_ratio = 0;  // max over z of gap / ((n - ||z||) v 1)
  std::size_t sites = 0;
  std::size_t violations = 0;  // holdout only: gap > K_b ((n - ||z||) v 1)
};

struct AnnulusStudy {
  int d = 0;
  std::vector<AnnulusStudyRow> calibration, holdout;
  double k_b = 0;
  bool holdout_flag = false;  // some holdout ratio above 2 K_b
  bool pass() const {
    if (calibration.empty()) return false;
    for (const auto& r : holdout)
      if (r.violations > 0) return false;
    return true;
  }
};

template <int D>
AnnulusStudy annulus_study(const std::vector<double>& calibration, const std::vector<double>& holdout) {
  AnnulusStudy s;
  s.d = D;
  auto eval = [](double n, double kb, bool count) {
    const auto spec = AnnulusSpec::standard(n);
    const AnnulusOracle<D> o(spec);
    AnnulusStudyRow r;
    r.n = n;
    r.delta = spec.delta;
    r.sites = o.annulus_sites().size();
    for (const auto& z : o.annulus_sites()) {
      const auto e = o.evaluate(z);
      const double scale = std::max(n - norm(z), 1.0);
      r.worst_ratio = std::max(r.worst_ratio, e.gap / scale);
      if (count && e.gap > kb * scale) ++r.violations;
    }
    return r;
  };
  for (double n : calibration) {
    s.calibration.push_back(eval(n, 0, false));
    s.k_b = std::max(s.k_b, s.calibration.back().worst_ratio);
  }
  for (double n : holdout) {
    s.holdout.push_back(eval(n, s.k_b, true));
    s.holdout_flag = s.holdout_flag || s.holdout.back().worst_ratio > 2 * s.k_b;
  }
  return s;
}

}  // namespace idla
