#pragma once

// Discrete potential theory for the simple random walk.
//
// Everything here is exact up to linear-solver tolerance: restricted Green's
// functions come from solving (I - P_L) x = b, where P_L is the walk kernel
// killed outside the region L. Whole-space values come from the Bessel
// integral representation of the continuous-time walk.

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#include <gsl/gsl_sf_bessel.h>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <ostream>
#include <vector>

#include "idla/errors.hpp"
#include "idla/lattice.hpp"

namespace idla {

inline constexpr std::size_t kDenseGreenBudget = 20'000;
// Above this many unknowns the sparse solves switch from LDL^T to CG.
inline constexpr std::size_t kDirectSolveLimit = 60'000;
inline constexpr double kEulerGamma = 0.57721566490153286060651209;

struct SolveResult {
  Eigen::VectorXd x;
  double residual = 0;  // ||A x - b||_inf
};

// The operator I - P_L on a finite region L, factored once.
template <int D>
class KilledWalkSystem {
 public:
  enum class Method { kAuto, kDirect, kIterative };

  explicit KilledWalkSystem(Region<D> region, Method method = Method::kAuto) : region_(std::move(region)) {
    const auto n = static_cast<Eigen::Index>(region_.size());
    if (n == 0) throw ConfigError("KilledWalkSystem: empty region");
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(region_.size() * (kNeighborCount<D> + 1));
    const double p = 1.0 / static_cast<double>(kNeighborCount<D>);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& site = region_[static_cast<std::size_t>(i)];
      entries.emplace_back(i, i, 1.0);
      for (unsigned k = 0; k < kNeighborCount<D>; ++k) {
        const auto j = region_.index_of(neighbor(site, k));
        if (j >= 0) entries.emplace_back(i, j, -p);
      }
    }
    a_.resize(n, n);
    a_.setFromTriplets(entries.begin(), entries.end());
    a_.makeCompressed();

    if (method == Method::kAuto)
      method = region_.size() <= kDirectSolveLimit ? Method::kDirect : Method::kIterative;
    if (method == Method::kDirect) {
      ldlt_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(a_);
      if (ldlt_->info() != Eigen::Success) throw SolverError("KilledWalkSystem: factorization failed");
    } else {
      cg_ = std::make_unique<Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper>>();
      cg_->setTolerance(1e-14);
      cg_->setMaxIterations(std::max<Eigen::Index>(1000, 20 * static_cast<Eigen::Index>(std::cbrt(n)) * 50));
      cg_->compute(a_);
    }
  }

  const Region<D>& region() const { return region_; }
  std::size_t size() const { return region_.size(); }
  const Eigen::SparseMatrix<double>& matrix() const { return a_; }

  SolveResult solve(const Eigen::VectorXd& b) const {
    SolveResult r;
    if (ldlt_) {
      r.x = ldlt_->solve(b);
    } else {
      r.x = cg_->solve(b);
    }
    r.residual = (a_ * r.x - b).cwiseAbs().maxCoeff();
    const double scale = 1.0 + r.x.cwiseAbs().maxCoeff();
    if (!std::isfinite(r.residual) || r.residual > 1e-9 * scale)
      throw SolverError("KilledWalkSystem: residual " + std::to_string(r.residual) + " too large");
    return r;
  }

  // u(y) = G_L(y, z) = G_L(z, y), the expected visits to z.
  SolveResult visits_to(const Point<D>& z) const {
    const auto j = region_.index_of(z);
    if (j < 0) throw ConfigError("visits_to: site outside region " + to_string(z));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size()));
    b[j] = 1.0;
    return solve(b);
  }

  // u(y) = sum over x in the set of G_L(y, x), time spent in the set.
  template <typename Pred>
  SolveResult occupation(Pred&& in_set) const {
    Eigen::VectorXd b(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) b[static_cast<Eigen::Index>(i)] = in_set(region_[i]) ? 1.0 : 0.0;
    return solve(b);
  }

  // E_y[H(L^c)] for every y.
  SolveResult expected_exit_time() const {
    return occupation([](const Point<D>&) { return true; });
  }

  // u(y) = E_y[f(S(H(L^c)))], f evaluated on exterior sites.
  template <typename F>
  SolveResult exit_expectation(F&& f) const {
    const double p = 1.0 / static_cast<double>(kNeighborCount<D>);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) {
      for (unsigned k = 0; k < kNeighborCount<D>; ++k) {
        const auto q = neighbor(region_[i], k);
        if (!region_.contains(q)) b[static_cast<Eigen::Index>(i)] += p * f(q);
      }
    }
    return solve(b);
  }

  // P_y(S(H) = z*) for all y in L and one exterior boundary site z*.
  SolveResult exit_probability_at(const Point<D>& target) const {
    return exit_expectation([&](const Point<D>& q) { return q == target ? 1.0 : 0.0; });
  }

  // Exit law from y via P_y(S(H) = z*) = (1/2d) sum_{z ~ z*, z in L} G_L(y, z).
  std::map<Point<D>, double> exit_law(const Point<D>& y) const {
    const auto g = visits_to(y).x;
    return exit_law_from_visits(g);
  }

  std::map<Point<D>, double> exit_law_from_visits(const Eigen::VectorXd& g) const {
    const double p = 1.0 / static_cast<double>(kNeighborCount<D>);
    std::map<Point<D>, double> law;
    for (std::size_t i = 0; i < size(); ++i) {
      for (unsigned k = 0; k < kNeighborCount<D>; ++k) {
        const auto q = neighbor(region_[i], k);
        if (!region_.contains(q)) law[q] += p * g[static_cast<Eigen::Index>(i)];
      }
    }
    return law;
  }

  double at(const Eigen::VectorXd& v, const Point<D>& y) const {
    const auto j = region_.index_of(y);
    if (j < 0) throw ConfigError("site outside region " + to_string(y));
    return v[j];
  }

 private:
  Region<D> region_;
  Eigen::SparseMatrix<double> a_;
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
  std::unique_ptr<Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper>> cg_;
};

// Dense restricted Green's function G_L(x, y), indexed by region order.
template <int D>
struct GreenTable {
  Region<D> region;
  Eigen::MatrixXd g;
  double residual = 0;  // max over columns of ||(I - P_L) g_col - e_col||_inf

  double operator()(const Point<D>& x, const Point<D>& y) const {
    const auto i = region.index_of(x);
    const auto j = region.index_of(y);
    if (i < 0 || j < 0) throw ConfigError("GreenTable: site outside region");
    return g(i, j);
  }

  double symmetry_error() const { return (g - g.transpose()).cwiseAbs().maxCoeff(); }
  double min_entry() const { return g.minCoeff(); }

  // E_z[H(L^c)] = sum_y G_L(y, z), using symmetry for the column sum.
  double expected_exit_time(const Point<D>& z) const {
    const auto j = region.index_of(z);
    if (j < 0) throw ConfigError("GreenTable: site outside region");
    return g.col(j).sum();
  }

  // P_y(S(H) = z*) = (1/2d) sum_{z in L, z ~ z*} G_L(y, z).
  std::map<Point<D>, double> exit_law(const Point<D>& y) const {
    const auto i = region.index_of(y);
    if (i < 0) throw ConfigError("GreenTable: site outside region");
    const double p = 1.0 / static_cast<double>(kNeighborCount<D>);
    std::map<Point<D>, double> law;
    for (std::size_t j = 0; j < region.size(); ++j) {
      for (unsigned k = 0; k < kNeighborCount<D>; ++k) {
        const auto q = neighbor(region[j], k);
        if (!region.contains(q)) law[q] += p * g(i, static_cast<Eigen::Index>(j));
      }
    }
    return law;
  }

  // Long format: x, y, G(x, y) for every stored pair.
  void write_csv(std::ostream& os) const {
    os << "x,y,green\r\n";
    os.precision(17);
    for (std::size_t i = 0; i < region.size(); ++i)
      for (std::size_t j = 0; j < region.size(); ++j)
        os << '"' << to_string(region[i]) << "\",\"" << to_string(region[j]) << "\","
           << g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) << "\r\n";
  }
};

template <int D>
GreenTable<D> solve_green(const Region<D>& region, std::size_t max_sites = kDenseGreenBudget) {
  if (region.size() > max_sites)
    throw RegionTooLarge("solve_green: " + std::to_string(region.size()) + " sites exceeds budget " +
                         std::to_string(max_sites));
  KilledWalkSystem<D> sys(region, KilledWalkSystem<D>::Method::kDirect);
  const auto n = static_cast<Eigen::Index>(region.size());
  GreenTable<D> t{region, Eigen::MatrixXd(n, n), 0.0};
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[j] = 1.0;
    auto r = sys.solve(e);
    t.g.col(j) = r.x;
  }
  // Row-wise residual of (I - P) G = I in the infinity norm.
  const Eigen::MatrixXd res = sys.matrix() * t.g - Eigen::MatrixXd::Identity(n, n);
  t.residual = res.cwiseAbs().rowwise().sum().maxCoeff();
  if (t.residual > 1e-10) throw SolverError("solve_green: residual " + std::to_string(t.residual));
  return t;
}

// ---------------------------------------------------------------------------
// Whole-space asymptotics.

inline double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
}

// C_d = 2 / (v_d (d - 2)), d >= 3.
inline double green_constant(int d) {
  if (d < 3) throw ConfigError("green_constant: needs d >= 3");
  return 2.0 / (unit_ball_volume(d) * (d - 2));
}

// (2 gamma + log 8) / pi, the constant term of the planar potential kernel.
inline double potential_kernel_constant() { return (2.0 * kEulerGamma + std::log(8.0)) / std::numbers::pi; }

// Leading-order G(0, z) (d >= 3) or a(0, z) (d = 2).
template <int D>
double green_asymptotic(const Point<D>& z) {
  if (is_origin(z)) throw ConfigError("green_asymptotic: z must be nonzero");
  const double r = norm(z);
  if constexpr (D == 2) {
    return (2.0 / std::numbers::pi) * std::log(r) + potential_kernel_constant();
  } else {
    return green_constant(D) / std::pow(r, D - 2);
  }
}

namespace detail {

template <int D>
struct BesselIntegrand {
  std::array<int, D> orders{};
  bool potential = false;  // integrate p_t(0) - p_t(z) instead of p_t(z)
};

template <int D>
double heat_kernel(double t, const std::array<int, D>& orders) {
  double prod = 1.0;
  const double s = t / D;
  for (int i = 0; i < D; ++i) prod *= gsl_sf_bessel_In_scaled(orders[static_cast<std::size_t>(i)], s);
  return prod;
}

template <int D>
double bessel_integrand(double t, void* params) {
  const auto* p = static_cast<const BesselIntegrand<D>*>(params);
  if (p->potential) return heat_kernel<D>(t, std::array<int, D>{}) - heat_kernel<D>(t, p->orders);
  return heat_kernel<D>(t, p->orders);
}

}  // namespace detail

// Exact G(0, z) for d >= 3 (any z) or the potential kernel a(0, z) for d = 2,
// from p_t(0, z) = prod_i e^{-t/d} I_{z_i}(t/d) integrated over t in [0, inf).
template <int D>
double green_whole_space(const Point<D>& z) {
  detail::BesselIntegrand<D> params;
  for (int i = 0; i < D; ++i) params.orders[static_cast<std::size_t>(i)] = std::abs(z[i]);
  params.potential = (D == 2);
  gsl_set_error_handler_off();
  gsl_function f;
  f.function = &detail::bessel_integrand<D>;
  f.params = &params;
  constexpr std::size_t kLimit = 2000;
  gsl_integration_workspace* ws = gsl_integration_workspace_alloc(kLimit);
  double result = 0, abserr = 0;
  // Split at a finite point so the oscillation-free head is integrated
  // directly and only the algebraic tail goes through the t -> 1/u map.
  const double split = 64.0 + 4.0 * static_cast<double>(norm2(z));
  double head = 0, head_err = 0;
  int status = gsl_integration_qag(&f, 0.0, split, 1e-14, 1e-12, kLimit, GSL_INTEG_GAUSS61, ws, &head, &head_err);
  double tail = 0, tail_err = 0;
  if (status == GSL_SUCCESS) status = gsl_integration_qagiu(&f, split, 1e-14, 1e-10, kLimit, ws, &tail, &tail_err);
  gsl_integration_workspace_free(ws);
  result = head + tail;
  abserr = head_err + tail_err;
  if (status != GSL_SUCCESS && abserr > 1e-8)
    throw SolverError(std::string("green_whole_space: integration failed: ") + gsl_strerror(status));
  return result;
}

// ---------------------------------------------------------------------------
// Exit-law bounds on B(0, n).

struct HittingBounds {
  double c1 = 0;       // min_z* P_0(S(H_n) = z*) n^{d-1}
  double c2 = 0;       // max_z* P_0(S(H_n) = z*) n^{d-1}
  double kappa_g = 0;  // max_{y, z*} P_y(S(H_n) = z*) ||y - z*||^{d-1}
  std::size_t boundary_sites = 0;
};

template <int D>
HittingBounds check_hitting_bounds(double n, std::size_t max_sites = kDenseGreenBudget) {
  if (n <= 0) throw ConfigError("check_hitting_bounds: radius must be positive");
  auto ball = enumerate_ball<D>(Point<D>{}, n);
  if (ball.size() > max_sites) throw RegionTooLarge("check_hitting_bounds: ball exceeds solve budget");
  KilledWalkSystem<D> sys(ball);
  const auto law0 = sys.exit_law(Point<D>{});
  HittingBounds out;
  out.boundary_sites = law0.size();
  const double scale = std::pow(n, D - 1);
  out.c1 = std::numeric_limits<double>::infinity();
  for (const auto& [site, p] : law0) {
    out.c1 = std::min(out.c1, p * scale);
    out.c2 = std::max(out.c2, p * scale);
  }
  for (const auto& [target, p0] : law0) {
    const auto h = sys.exit_probability_at(target).x;
    for (std::size_t i = 0; i < ball.size(); ++i) {
      const double dist = norm(ball[i] - target);
      out.kappa_g = std::max(out.kappa_g, h[static_cast<Eigen::Index>(i)] * std::pow(dist, D - 1));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Expected time in a thin outer annulus, and the discrete mean value property.

inline constexpr double kMinAnnulusWidth = 1.0;

// Outer radius n, width delta, inner radius r_n = n - delta.
struct AnnulusSpec {
  double n = 0;
  double delta = 0;

  double inner() const { return n - delta; }

  // Width must lie in [1, ceil(n^{1/3})] and leave a positive inner radius.
  void validate() const {
    if (n <= 0) throw ConfigError("AnnulusSpec: n must be positive");
    if (delta < kMinAnnulusWidth) throw ConfigError("AnnulusSpec: width below minimum");
    if (delta > std::ceil(std::cbrt(n))) throw ConfigError("AnnulusSpec: width above ceil(n^{1/3})");
    if (inner() <= 0) throw ConfigError("AnnulusSpec: inner radius must be positive");
  }

  static AnnulusSpec standard(double n) { return {n, std::ceil(std::cbrt(n))}; }
};

struct AnnulusTimeExpansion {
  double lhs = 0;     // sum over the annulus of G_n(z, y)
  double alpha0 = 0;  // E_z[||S(H_n)|| - ||z|| | exit before hitting B(0, r_n)]
  double rhs = 0;     // 2 d delta alpha0 - d (n - ||z||)^2
  double gap = 0;     // |lhs - rhs|
};

// Exact solves for every z of the annulus A(r_n, n) at once.
template <int D>
class AnnulusOracle {
 public:
  explicit AnnulusOracle(AnnulusSpec spec, std::size_t max_sites = 2'000'000) : spec_(spec) {
    spec_.validate();
    auto ball = enumerate_ball<D>(Point<D>{}, spec_.n);
    if (ball.size() > max_sites) throw RegionTooLarge("AnnulusOracle: ball exceeds solve budget");
    const Annulus ring{spec_.inner(), spec_.n};
    KilledWalkSystem<D> ball_sys(std::move(ball));
    time_in_ring_ = ball_sys.occupation([&](const Point<D>& y) { return ring.contains(y); }).x;
    ball_ = ball_sys.region();

    KilledWalkSystem<D> ring_sys(enumerate_annulus<D>(ring));
    const double n = spec_.n;
    // The annulus exterior splits into sites with norm >= n (outer exit) and
    // sites inside B(0, r_n).
    auto outer = [n](const Point<D>& q) { return !norm2_below(norm2(q), n); };
    exit_outer_ = ring_sys.exit_expectation([&](const Point<D>& q) { return outer(q) ? 1.0 : 0.0; }).x;
    exit_outer_norm_ = ring_sys.exit_expectation([&](const Point<D>& q) { return outer(q) ? norm(q) : 0.0; }).x;
    ring_ = ring_sys.region();
  }

  const AnnulusSpec& spec() const { return spec_; }
  const Region<D>& annulus_sites() const { return ring_; }

  AnnulusTimeExpansion evaluate(const Point<D>& z) const {
    const auto ri = ring_.index_of(z);
    if (ri < 0) throw ConfigError("annulus_time_expansion: z outside the annulus " + to_string(z));
    const auto bi = ball_.index_of(z);
    AnnulusTimeExpansion e;
    e.lhs = time_in_ring_[bi];
    const double zn = norm(z);
    e.alpha0 = exit_outer_norm_[ri] / exit_outer_[ri] - zn;
    e.rhs = 2.0 * D * spec_.delta * e.alpha0 - D * (spec_.n - zn) * (spec_.n - zn);
    e.gap = std::abs(e.lhs - e.rhs);
    return e;
  }

 private:
  AnnulusSpec spec_;
  Region<D> ball_, ring_;
  Eigen::VectorXd time_in_ring_, exit_outer_, exit_outer_norm_;
};

template <int D>
AnnulusTimeExpansion annulus_time_expansion(const AnnulusSpec& spec, const Point<D>& z) {
  return AnnulusOracle<D>(spec).evaluate(z);
}

// | |B(0, r_n)| G_n(0, z) - sum_{y in B(0, r_n)} G_n(y, z) | for outer-rim z,
// and the same comparison phrased through exit laws on the boundary.
template <int D>
class MeanValueOracle {
 public:
  explicit MeanValueOracle(AnnulusSpec spec, std::size_t max_sites = 2'000'000) : spec_(spec) {
    spec_.validate();
    auto ball = enumerate_ball<D>(Point<D>{}, spec_.n);
    if (ball.size() > max_sites) throw RegionTooLarge("MeanValueOracle: ball exceeds solve budget");
    KilledWalkSystem<D> sys(std::move(ball));
    const double rn = spec_.inner();
    from_origin_ = sys.visits_to(Point<D>{}).x;
    from_inner_ball_ = sys.occupation([rn](const Point<D>& y) { return norm2_below(norm2(y), rn); }).x;
    inner_volume_ = static_cast<double>(ball_size<D>(rn));
    ball_ = sys.region();
    for (const auto& z : ball_)
      if (spec_.n - norm(z) <= 1.0) rim_.push_back(z);
    exit_origin_ = sys.exit_law_from_visits(from_origin_);
    exit_inner_ = sys.exit_law_from_visits(from_inner_ball_);
  }

  const AnnulusSpec& spec() const { return spec_; }
  double inner_volume() const { return inner_volume_; }
  const std::vector<Point<D>>& outer_rim() const { return rim_; }

  double discrepancy(const Point<D>& z) const {
    const auto i = ball_.index_of(z);
    if (i < 0 || spec_.n - norm(z) > 1.0) throw ConfigError("mean_value_discrepancy: z must satisfy n - ||z|| <= 1");
    return std::abs(inner_volume_ * from_origin_[i] - from_inner_ball_[i]);
  }

  double max_discrepancy() const {
    double m = 0;
    for (const auto& z : rim_) m = std::max(m, discrepancy(z));
    return m;
  }

  // | |B_{r_n}| P_0(exit at z*) - sum_{y in B_{r_n}} P_y(exit at z*) |, per z*.
  std::map<Point<D>, double> exit_discrepancy() const {
    std::map<Point<D>, double> out;
    for (const auto& [site, p0] : exit_origin_) out[site] = std::abs(inner_volume_ * p0 - exit_inner_.at(site));
    return out;
  }

 private:
  AnnulusSpec spec_;
  Region<D> ball_;
  std::vector<Point<D>> rim_;
  Eigen::VectorXd from_origin_, from_inner_ball_;
  double inner_volume_ = 0;
  std::map<Point<D>, double> exit_origin_, exit_inner_;
};

template <int D>
double mean_value_discrepancy(const AnnulusSpec& spec, const Point<D>& z) {
  return MeanValueOracle<D>(spec).discrepancy(z);
}

}  // namespace idla
