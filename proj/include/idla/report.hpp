#pragma once

// CSV tables: RFC 4180 (CRLF line ends, header row, fields quoted only when
// needed).

#include <charconv>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "idla/analysis.hpp"
#include "idla/coupling.hpp"
#include "idla/flashing.hpp"
#include "idla/idla.hpp"

namespace idla {

// Shortest round-trip representation; identical bytes for identical doubles.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class CsvWriter {
 public:
  CsvWriter(std::ostream& os, const std::vector<std::string>& header) : os_(os), columns_(header.size()) {
    write(header);
  }

  void row(const std::vector<std::string>& fields) {
    if (fields.size() != columns_) throw InvariantViolation("CsvWriter: row width differs from header");
    write(fields);
  }

 private:
  void write(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) os_ << ',';
      os_ << csv_field(fields[i]);
    }
    os_ << "\r\n";
  }

  std::ostream& os_;
  std::size_t columns_;
};

inline std::string str(double v) { return format_double(v); }
inline std::string str(std::uint64_t v) { return std::to_string(v); }
inline std::string str(std::int64_t v) { return std::to_string(v); }
inline std::string str(std::uint32_t v) { return std::to_string(v); }
inline std::string str(bool v) { return v ? "true" : "false"; }

inline std::vector<std::string> coordinate_names(int d, const std::string& prefix = "x") {
  std::vector<std::string> out;
  for (int i = 1; i <= d; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

template <int D>
void append_point(std::vector<std::string>& row, const Point<D>& p) {
  for (int i = 0; i < D; ++i) row.push_back(std::to_string(p[i]));
}

inline std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// One row per settled explorer, in settling order.
template <int D>
void write_settles_csv(std::ostream& os, const std::vector<SettleEvent<D>>& settles) {
  CsvWriter w(os, concat(concat({"explorer"}, coordinate_names(D)), {"norm", "time"}));
  for (const auto& s : settles) {
    std::vector<std::string> r{str(s.explorer)};
    append_point(r, s.site);
    r.push_back(str(norm(s.site)));
    r.push_back(str(s.time));
    w.row(r);
  }
}

inline void write_fluctuation_csv(std::ostream& os, const std::string& model, int d,
                                  const std::vector<FluctuationRecord>& records) {
  CsvWriter w(os, {"model", "d", "n", "explorers", "seed", "delta_inner", "delta_outer"});
  for (const auto& r : records)
    w.row({model, std::to_string(d), str(r.n), str(r.explorers), str(r.seed), str(r.delta_inner),
           str(r.delta_outer)});
}

// Long format: one row per (radius, seed).
inline void write_scaling_records_csv(std::ostream& os, const ScalingReport& rep) {
  CsvWriter w(os, {"model", "d", "n", "run", "explorers", "seed", "delta_inner", "delta_outer", "steps"});
  std::size_t run = 0, last = static_cast<std::size_t>(-1);
  for (const auto& r : rep.records) {
    run = r.radius_index == last ? run + 1 : 0;
    last = r.radius_index;
    w.row({to_string(rep.options.model), std::to_string(rep.options.d), str(r.errors.n), std::to_string(run),
           str(r.errors.explorers), str(r.errors.seed), str(r.errors.delta_inner), str(r.errors.delta_outer),
           str(r.steps)});
  }
}

inline void write_scaling_summary_csv(std::ostream& os, const ScalingReport& rep) {
  CsvWriter w(os, {"model", "d", "n", "explorers", "runs", "mean_delta_inner", "sd_delta_inner",
                   "mean_delta_outer", "sd_delta_outer"});
  for (const auto& s : rep.summaries)
    w.row({to_string(rep.options.model), std::to_string(rep.options.d), str(s.n), str(s.explorers),
           std::to_string(s.runs), str(s.mean_inner), str(s.sd_inner), str(s.mean_outer), str(s.sd_outer)});
}

template <int D>
void write_coupling_csv(std::ostream& os, const CouplingReport<D>& rep) {
  CsvWriter w(os, concat(concat(concat({"explorer", "t_bar", "tau_star"}, coordinate_names(D, "bar_x")),
                                coordinate_names(D, "star_x")),
                         {"color", "tau_star_ge_t_bar"}));
  for (std::size_t k = 0; k < rep.t_bar.size(); ++k) {
    std::vector<std::string> r{std::to_string(k), str(rep.t_bar[k]), str(rep.tau_star[k])};
    append_point(r, rep.bar_site[k]);
    append_point(r, rep.star_site[k]);
    r.push_back(rep.color[k] == SiteColor::kRed ? "red" : "blue");
    r.push_back(str(rep.tau_star[k] >= rep.t_bar[k]));
    w.row(r);
  }
}

template <int D>
void write_corollary_csv(std::ostream& os, const CorollaryCheck<D>& c) {
  CsvWriter w(os, {"k", "outer_hypothesis", "outer_conclusion", "inner_hypothesis", "inner_conclusion", "ok"});
  for (const auto& r : c.rows)
    w.row({std::to_string(r.k), str(r.outer_hypothesis), str(r.outer_conclusion), str(r.inner_hypothesis),
           str(r.inner_conclusion), str(r.ok())});
}

template <int D>
void write_uniform_hitting_csv(std::ostream& os, const UniformHittingReport<D>& rep) {
  CsvWriter w(os, concat(concat(concat({"anchor"}, coordinate_names(D, "anchor_x")), coordinate_names(D)),
                         {"count", "samples", "weight"}));
  for (const auto& s : rep.sites) {
    std::vector<std::string> r{std::to_string(s.anchor)};
    append_point(r, rep.anchors[s.anchor].anchor);
    append_point(r, s.site);
    r.push_back(str(s.count));
    r.push_back(str(rep.samples));
    r.push_back(str(s.weight));
    w.row(r);
  }
}

struct CouponRow {
  std::string label;
  CouponConfig config;
  CouponResult result;
};

inline void write_coupon_csv(std::ostream& os, const std::vector<CouponRow>& rows) {
  CsvWriter w(os, {"config", "L", "A", "alpha1", "alpha2", "null_mass", "in_range", "trials", "completed",
                   "estimate", "wilson_lo", "wilson_hi", "bound", "holds"});
  for (const auto& r : rows)
    w.row({r.label, std::to_string(r.config.L), str(r.config.A), str(r.config.alpha1()), str(r.config.alpha2()),
           str(r.config.null_mass()), str(r.result.in_range), str(r.result.trials), str(r.result.completed),
           str(r.result.estimate), str(r.result.wilson.lo), str(r.result.wilson.hi), str(r.result.bound),
           str(r.result.holds)});
}

}  // namespace idla
