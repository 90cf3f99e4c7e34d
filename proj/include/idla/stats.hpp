#pragma once

// Small statistics toolkit: confidence intervals, goodness-of-fit tests,
// least squares. Distribution functions come from Boost.Math.

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "idla/errors.hpp"
#include "idla/random.hpp"

namespace idla {

struct Interval {
  double lo = 0;
  double hi = 0;
  bool contains(double v) const { return lo <= v && v <= hi; }
};

inline double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

// Wilson score interval for a binomial proportion at two-sided level `level`.
inline Interval wilson_interval(std::uint64_t successes, std::uint64_t trials, double level = 0.95) {
  if (trials == 0) return {0, 1};
  const double z = normal_quantile(0.5 + level / 2);
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double denom = 1 + z * z / n;
  const double center = (p + z * z / (2 * n)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct TestResult {
  double statistic = 0;
  double df = 0;
  double p_value = 1;
};

inline double chi_square_upper_tail(double statistic, double df) {
  if (df <= 0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), std::max(0.0, statistic)));
}

// Pearson goodness of fit. Cells whose expected count is below `min_expected`
// are pooled into one cell (dropped if the pool is still too small).
// Observed keys missing from `probs` count against the model.
template <typename Key>
TestResult chi_square_gof(const std::map<Key, std::uint64_t>& observed, const std::map<Key, double>& probs,
                          double min_expected = 5.0) {
  std::uint64_t total = 0;
  for (const auto& [k, c] : observed) total += c;
  if (total == 0) throw ConfigError("chi_square_gof: no observations");
  const double n = static_cast<double>(total);
  TestResult r;
  double pooled_obs = 0, pooled_exp = 0;
  int cells = 0;
  for (const auto& [k, p] : probs) {
    const auto it = observed.find(k);
    const double o = it == observed.end() ? 0.0 : static_cast<double>(it->second);
    const double e = p * n;
    if (e < min_expected) {
      pooled_obs += o;
      pooled_exp += e;
      continue;
    }
    r.statistic += (o - e) * (o - e) / e;
    ++cells;
  }
  for (const auto& [k, c] : observed)
    if (!probs.count(k)) pooled_obs += static_cast<double>(c);
  if (pooled_exp >= min_expected) {
    r.statistic += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
    ++cells;
  } else if (pooled_obs > pooled_exp + 10 * std::sqrt(pooled_exp + 1)) {
    // Mass where the model puts essentially none.
    r.statistic = std::numeric_limits<double>::infinity();
  }
  r.df = cells - 1;
  r.p_value = std::isinf(r.statistic) ? 0.0 : chi_square_upper_tail(r.statistic, r.df);
  return r;
}

// Two samples of random site sets (one set per run). The statistic sums the
// squared two-proportion z-scores of every site whose occupation frequency is
// not degenerate; the p-value comes from a label-permutation test because the
// per-site terms are correlated. df reports the number of informative sites
// minus one (for reference only).
inline TestResult two_sample_occupation_test(const std::vector<std::vector<std::int32_t>>& a,
                                             const std::vector<std::vector<std::int32_t>>& b, std::size_t sites,
                                             std::uint64_t seed, int permutations = 1999) {
  if (a.empty() || b.empty()) throw ConfigError("two_sample_occupation_test: empty sample");
  const std::size_t na = a.size(), nb = b.size(), total = na + nb;
  std::vector<const std::vector<std::int32_t>*> runs;
  runs.reserve(total);
  for (const auto& r : a) runs.push_back(&r);
  for (const auto& r : b) runs.push_back(&r);

  std::vector<double> pooled(sites, 0.0);
  for (const auto* r : runs)
    for (auto s : *r) pooled[static_cast<std::size_t>(s)] += 1;
  std::vector<double> weight(sites, 0.0);
  int informative = 0;
  for (std::size_t s = 0; s < sites; ++s) {
    const double p = pooled[s] / static_cast<double>(total);
    const double var = p * (1 - p) * (1.0 / static_cast<double>(na) + 1.0 / static_cast<double>(nb));
    if (var > 0) {
      weight[s] = 1.0 / var;
      ++informative;
    }
  }

  std::vector<double> count_a(sites);
  auto statistic = [&](const std::vector<std::uint8_t>& in_a) {
    std::fill(count_a.begin(), count_a.end(), 0.0);
    for (std::size_t i = 0; i < total; ++i)
      if (in_a[i])
        for (auto s : *runs[i]) count_a[static_cast<std::size_t>(s)] += 1;
    double stat = 0;
    for (std::size_t s = 0; s < sites; ++s) {
      if (weight[s] == 0) continue;
      const double pa = count_a[s] / static_cast<double>(na);
      const double pb = (pooled[s] - count_a[s]) / static_cast<double>(nb);
      stat += (pa - pb) * (pa - pb) * weight[s];
    }
    return stat;
  };

  std::vector<std::uint8_t> labels(total, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(na), 1);
  TestResult r;
  r.statistic = statistic(labels);
  r.df = informative - 1;
  RandomStream rng(seed, 0x7065726d);
  int at_least = 0;
  for (int k = 0; k < permutations; ++k) {
    for (std::size_t i = total - 1; i > 0; --i)
      std::swap(labels[i], labels[rng.below(static_cast<std::uint32_t>(i + 1))]);
    if (statistic(labels) >= r.statistic) ++at_least;
  }
  r.p_value = (1.0 + at_least) / (1.0 + permutations);
  return r;
}

// Limiting Kolmogorov distribution, P(K > lambda).
inline double kolmogorov_upper_tail(double lambda) {
  if (lambda <= 0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 1 : -1) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

// One-sample Kolmogorov-Smirnov test against a continuous CDF, with the
// Stephens small-sample correction of the statistic.
template <typename Cdf>
TestResult ks_test(std::vector<double> samples, Cdf&& cdf) {
  if (samples.empty()) throw ConfigError("ks_test: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double sn = std::sqrt(n);
  TestResult r;
  r.statistic = d;
  r.df = n;
  r.p_value = kolmogorov_upper_tail((sn + 0.12 + 0.11 / sn) * d);
  return r;
}

struct LinearFit {
  double slope = 0;
  double intercept = 0;
};

inline LinearFit ols(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("ols: need at least two paired points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) throw ConfigError("ols: x values are all equal");
  return {sxy / sxx, my - sxy / sxx * mx};
}

// Least-squares multiplier c for y ~ c x (no intercept).
inline double fit_multiple(const std::vector<double>& x, const std::vector<double>& y) {
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
  }
  if (sxx == 0) throw ConfigError("fit_multiple: zero regressor");
  return sxy / sxx;
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Empirical quantile with linear interpolation (type 7).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ConfigError("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace idla
