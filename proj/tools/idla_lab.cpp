// idla_lab: runs growth, coupling, scaling and audit experiments and writes
// CSV tables, JSON reports and a manifest into the output directory.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "idla/analysis.hpp"
#include "idla/coupling.hpp"
#include "idla/flashing.hpp"
#include "idla/idla.hpp"
#include "idla/potential.hpp"
#include "idla/report.hpp"

#ifndef IDLA_GIT_DESCRIBE
#define IDLA_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace idla;

namespace {

constexpr int kSchemaVersion = 1;

enum ExitCode { kOk = 0, kAssertion = 1, kConfig = 2, kBudget = 3 };

// JSON config file: top-level keys are global flags, nested objects hold the
// flags of a subcommand, e.g. {"seed": 7, "scaling": {"radii": [25, 50]}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  static void collect(const json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (it->is_object()) {
        auto p = parents;
        p.push_back(it.key());
        collect(*it, p, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array()) {
        for (const auto& v : *it) item.inputs.push_back(scalar(v));
      } else if (it->is_boolean()) {
        item.inputs = {it->get<bool>() ? "true" : "false"};
      } else {
        item.inputs = {scalar(*it)};
      }
      items.push_back(item);
    }
  }
};

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Effective value of every option of `app` and of the subcommands that ran.
json echo_options(const CLI::App* app) {
  json out = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config" || name.empty()) continue;
    std::vector<std::string> values = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
    if (values.empty()) {
      if (opt->get_default_str().empty()) continue;
      values = {opt->get_default_str()};
    }
    if (values.size() == 1 && opt->get_expected_max() <= 1)
      out[name] = values[0];
    else
      out[name] = values;
  }
  for (const CLI::App* sub : app->get_subcommands()) out[sub->get_name()] = echo_options(sub);
  return out;
}

struct Session {
  fs::path out;
  std::uint64_t seed = 1;
  std::string command;
  json config;
  std::vector<std::string> files;

  void write(const std::string& name, const std::string& content) {
    std::ofstream f(out / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (out / name).string());
    f << content;
    files.push_back(name);
  }

  void write_json(const std::string& name, json body) {
    body["schema_version"] = kSchemaVersion;
    body["command"] = command;
    body["config"] = config;
    write(name, body.dump(2) + "\n");
  }
};

json interval(const Interval& i) { return {{"lo", i.lo}, {"hi", i.hi}}; }

template <int D>
json point(const Point<D>& p) {
  json a = json::array();
  for (int i = 0; i < D; ++i) a.push_back(p[i]);
  return a;
}

Engine parse_engine(const std::string& s) {
  if (s == "step") return Engine::kStep;
  if (s == "jump") return Engine::kJump;
  throw ConfigError("unknown engine '" + s + "' (step | jump)");
}

// Smallest radius r (on a 1/4 grid) with |B(0, r)| >= n.
template <int D>
double radius_for(std::size_t n) {
  double r = 1;
  while (ball_size<D>(r) < static_cast<std::int64_t>(n)) r += 0.25;
  return r;
}

// ---------------------------------------------------------------------------

struct GrowArgs {
  std::string model = "idla";
  int d = 2;
  double n = 10;
  std::string engine = "jump";
  double h = 16;
};

int run_grow(Session& s, const GrowArgs& a) {
  const Model model = parse_model(a.model);
  const Engine engine = parse_engine(a.engine);
  if (!(a.n > 0)) throw ConfigError("grow: --n must be positive");
  return with_dimension(a.d, [&](auto dim) {
    constexpr int D = decltype(dim)::value;
    const auto explorers = static_cast<std::size_t>(ball_size<D>(a.n));
    FluctuationRecord rec;
    std::ostringstream sites;
    if (model == Model::kIdla) {
      const auto c = grow_idla<D>(explorers, s.seed, {engine});
      write_settles_csv(sites, c.settles);
      rec = measure_errors(c, a.n, s.seed);
    } else {
      const auto shells = ShellPartition::constant(a.h, a.n);
      FlashOptions fo;
      fo.engine = engine;
      fo.record_history = false;
      const auto c = grow_flashing<D>(explorers, shells, s.seed, fo);
      write_settles_csv(sites, c.settles);
      rec = measure_flash_errors(c, a.n, s.seed);
    }
    std::ostringstream errors;
    write_fluctuation_csv(errors, a.model, D, {rec});
    s.write("grow_sites.csv", sites.str());
    s.write("grow_errors.csv", errors.str());
    std::cout << a.model << " d=" << D << " n=" << a.n << " explorers=" << explorers
              << " delta_I=" << rec.delta_inner << " delta_O=" << rec.delta_outer << "\n";
    return kOk;
  });
}

struct CoupleArgs {
  std::size_t explorers = 500;
  int d = 2;
  double h = 16;
};

int run_couple(Session& s, const CoupleArgs& a) {
  return with_dimension(a.d, [&](auto dim) {
    constexpr int D = decltype(dim)::value;
    const double reach = std::max(3 * radius_for<D>(a.explorers), 2 * a.h);
    const auto shells = ShellPartition::constant(a.h, reach);
    const auto run = run_coupled<D>(a.explorers, shells, s.seed);
    const auto check = check_corollary(run, shells);
    const auto& rep = run.report;
    bool ordered = true;
    for (std::size_t k = 0; k < rep.t_bar.size(); ++k) ordered = ordered && rep.tau_star[k] >= rep.t_bar[k];
    std::ostringstream explorers, corollary;
    write_coupling_csv(explorers, rep);
    write_corollary_csv(corollary, check);
    s.write("couple_explorers.csv", explorers.str());
    s.write("couple_corollary.csv", corollary.str());
    std::size_t bad_rows = 0;
    for (const auto& r : check.rows) bad_rows += !r.ok();
    s.write_json("couple_report.json",
                 {{"explorers", a.explorers},
                  {"idla_size", run.idla.size()},
                  {"flash_size", run.flash.size()},
                  {"all_tau_star_ge_t_bar", ordered},
                  {"lemma_violations", rep.lemma_violations},
                  {"increments", rep.increments},
                  {"idla_steps", rep.idla_steps},
                  {"handoffs", rep.handoffs},
                  {"blue_handoffs", rep.blue_handoffs},
                  {"corollary",
                   {{"shell_rows", check.rows.size()},
                    {"failed_rows", bad_rows},
                    {"inclusion_violations", check.inclusion_violations},
                    {"desired_violations", check.desired_violations},
                    {"psi_bijective", check.psi_bijective},
                    {"increments_match", check.increments_match},
                    {"idla_steps_match", check.idla_steps_match},
                    {"ok", check.ok()}}}});
    const bool ok = ordered && check.ok() && run.idla.size() == a.explorers && run.flash.size() == a.explorers;
    std::cout << "coupled N=" << a.explorers << " tau*>=t_bar " << (ordered ? "all" : "VIOLATED") << ", corollary "
              << (check.ok() ? "ok" : "VIOLATED") << "\n";
    return ok ? kOk : kAssertion;
  });
}

struct ScalingArgs {
  std::string model = "idla";
  int d = 2;
  std::vector<double> radii{25, 50, 100, 200};
  std::size_t seeds = 100;
  double h = 16;
  std::string engine = "jump";
  std::uint64_t max_steps = 0;
  int bootstrap = 1000;
  std::vector<double> calibration, holdout;
};

json fit_json(const ExponentFit& f) {
  if (!f.defined) return {{"defined", false}};
  return {{"defined", true}, {"slope", f.slope}, {"ci95", interval(f.ci)}};
}

int run_scaling(Session& s, const ScalingArgs& a) {
  ScalingOptions o;
  o.model = parse_model(a.model);
  o.d = a.d;
  o.radii = a.radii;
  o.seeds = a.seeds;
  o.h = a.h;
  o.engine = parse_engine(a.engine);
  o.seed = s.seed;
  o.max_total_steps = a.max_steps;
  o.bootstrap = a.bootstrap;
  o.calibration = a.calibration;
  o.holdout = a.holdout;
  const auto rep = run_scaling_experiment(o);
  std::ostringstream records, summary;
  write_scaling_records_csv(records, rep);
  write_scaling_summary_csv(summary, rep);
  s.write("scaling_records.csv", records.str());
  s.write("scaling_summary.csv", summary.str());
  json body{{"model", a.model},
            {"d", a.d},
            {"seeds_per_radius", a.seeds},
            {"complete", rep.complete},
            {"ci_method", rep.ci_method},
            {"exponent_delta_inner", fit_json(rep.inner)},
            {"exponent_delta_outer", fit_json(rep.outer)}};
  if (rep.bracket.defined) {
    json rows = json::array();
    for (const auto& r : rep.bracket.holdout)
      rows.push_back({{"n", r.n}, {"mean_delta_inner", r.mean_inner}, {"lower", r.lower}, {"upper", r.upper},
                      {"inside", r.inside}});
    body["bracket"] = {{"a", rep.bracket.a},
                       {"b", rep.bracket.b},
                       {"least_squares_multiple_h_log_n", rep.bracket.ls_logn},
                       {"least_squares_multiple_h_log_h", rep.bracket.ls_logh},
                       {"holdout", rows},
                       {"holds", rep.bracket.holds}};
  }
  s.write_json("scaling_report.json", body);
  for (const auto& r : rep.summaries)
    std::cout << a.model << " n=" << r.n << " mean delta_I=" << r.mean_inner << " mean delta_O=" << r.mean_outer
              << "\n";
  if (rep.inner.defined)
    std::cout << "exponent delta_I " << rep.inner.slope << " [" << rep.inner.ci.lo << ", " << rep.inner.ci.hi
              << "]\n";
  if (!rep.complete) {
    std::cerr << "step budget exceeded: partial report written\n";
    return kBudget;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

int run_audit_mgf(Session& s, std::size_t instances) {
  const auto r = mgf_sweep(instances, s.seed);
  s.write_json("audit_mgf.json", {{"instances", r.instances},
                                  {"holds", r.holds},
                                  {"violated", r.violated},
                                  {"skipped", r.skipped},
                                  {"min_log_margin", r.min_margin}});
  std::cout << "mgf: " << r.instances << " instances, " << r.violated << " violations, " << r.skipped
            << " skipped\n";
  return r.violated == 0 ? kOk : kAssertion;
}

std::vector<CouponRow> coupon_suite(std::uint64_t trials, std::uint64_t seed) {
  std::vector<CouponRow> rows{{"single-item", CouponConfig::uniform(1, 0.5), {}},
                              {"uniform-100", CouponConfig::uniform(100, 1.0), {}},
                              {"random-100", CouponConfig::random(100, 0.5, 1.5, 0.95, 0.5, seed), {}}};
  for (auto& r : rows) r.result = simulate_coupon(r.config, trials, seed);
  return rows;
}

int run_audit_coupon(Session& s, std::uint64_t trials) {
  const auto rows = coupon_suite(trials, s.seed);
  std::ostringstream csv;
  write_coupon_csv(csv, rows);
  s.write("audit_coupon.csv", csv.str());
  bool ok = true;
  json list = json::array();
  for (const auto& r : rows) {
    ok = ok && r.result.holds;
    list.push_back({{"config", r.label}, {"in_range", r.result.in_range}, {"estimate", r.result.estimate},
                    {"wilson95", interval(r.result.wilson)}, {"bound", r.result.bound}, {"holds", r.result.holds}});
    std::cout << "coupon " << r.label << ": P=" << r.result.estimate << " bound=" << r.result.bound
              << (r.result.in_range ? "" : " (A outside the lemma's range)") << (r.result.holds ? "" : " VIOLATED")
              << "\n";
  }
  s.write_json("audit_coupon.json", {{"trials", trials}, {"configs", list}, {"ok", ok}});
  return ok ? kOk : kAssertion;
}

struct UniformArgs {
  int d = 2;
  double h = 16;
  std::size_t shell = 1;
  std::size_t anchors = 8;
  std::uint64_t samples = 1'000'000;
  double ratio_ceiling = 25;
  std::string engine = "jump";
};

int run_audit_uniform(Session& s, const UniformArgs& a) {
  return with_dimension(a.d, [&](auto dim) {
    constexpr int D = decltype(dim)::value;
    const auto shells = ShellPartition::constant(a.h, a.h * static_cast<double>(2 * a.shell + 2));
    shells.require_flashing_widths();
    UniformHittingOptions o;
    o.anchors = a.anchors;
    o.samples = a.samples;
    o.ratio_ceiling = a.ratio_ceiling;
    o.seed = s.seed;
    o.engine = parse_engine(a.engine);
    const auto rep = uniform_hitting_audit<D>(shells, a.shell, spread_anchors<D>(shells, a.shell, a.anchors), o);
    std::ostringstream csv;
    write_uniform_hitting_csv(csv, rep);
    s.write("audit_uniform.csv", csv.str());
    json anchors = json::array();
    for (const auto& x : rep.anchors)
      anchors.push_back({{"anchor", point(x.anchor)},
                         {"cell_sites", x.cell_sites},
                         {"min_weight", x.min_weight},
                         {"max_weight", x.max_weight},
                         {"min_count", x.min_count},
                         {"x_count", x.x_count},
                         {"anchor_count", x.anchor_count},
                         {"outside_cell", x.outside},
                         {"x_at_anchor", x.x_at_anchor},
                         {"floor_ok", x.floor_ok}});
    s.write_json("audit_uniform.json", {{"shell", rep.shell},
                                        {"h", rep.h},
                                        {"samples_per_anchor", rep.samples},
                                        {"anchors", anchors},
                                        {"min_weight", rep.global_min},
                                        {"max_weight", rep.global_max},
                                        {"ratio", rep.ratio},
                                        {"ratio_ceiling", a.ratio_ceiling},
                                        {"asserted", rep.asserted},
                                        {"floor_ok", rep.floor_ok},
                                        {"in_band", rep.in_band}});
    std::cout << "uniform hitting: weights in [" << rep.global_min << ", " << rep.global_max << "], ratio "
              << rep.ratio << "\n";
    if (!rep.asserted) {
      std::cerr << "fewer than 20 hits on some cell site: data written, nothing asserted\n";
      return kOk;
    }
    return rep.pass() ? kOk : kAssertion;
  });
}

struct PotentialArgs {
  int d = 2;
  double n = 10;
  std::uint64_t walks = 100'000;
  bool table = false;
};

int run_audit_potential(Session& s, const PotentialArgs& a) {
  return with_dimension(a.d, [&](auto dim) {
    constexpr int D = decltype(dim)::value;
    const auto r = potential_audit<D>(a.n, a.walks, s.seed);
    if (a.table) {
      std::ostringstream csv;
      solve_green(enumerate_ball<D>(Point<D>{}, a.n)).write_csv(csv);
      s.write("green_table.csv", csv.str());
    }
    s.write_json("audit_potential.json", {{"n", r.n},
                                          {"d", r.d},
                                          {"sites", r.sites},
                                          {"symmetry_error", r.symmetry_error},
                                          {"min_entry", r.min_entry},
                                          {"exit_sum_error", r.exit_sum_error},
                                          {"exact_exit_time", r.exact_exit_time},
                                          {"mc_mean", r.mc_mean},
                                          {"mc_standard_error", r.mc_se},
                                          {"walks", r.walks},
                                          {"pass", r.pass}});
    std::cout << "potential: E_0[H] exact " << r.exact_exit_time << ", Monte Carlo " << r.mc_mean << " +- " << r.mc_se
              << "\n";
    return r.pass ? kOk : kAssertion;
  });
}

struct StudyArgs {
  int d = 2;
  std::vector<double> trend{20, 30, 40};
  std::vector<double> calibration;
  std::vector<double> holdout;
};

json values_json(const std::vector<RadiusValue>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back({{"n", x.n}, {"delta", x.delta}, {"max_discrepancy", x.value}});
  return a;
}

int run_audit_meanvalue(Session& s, const StudyArgs& a) {
  return with_dimension(a.d, [&](auto dim) {
    constexpr int D = decltype(dim)::value;
    const auto r = mean_value_study<D>(a.trend, a.calibration, a.holdout);
    std::ostringstream csv;
    CsvWriter w(csv, {"set", "d", "n", "delta", "max_discrepancy"});
    for (const auto& [name, rows] : {std::pair{"trend", &r.trend}, std::pair{"calibration", &r.calibration},
                                     std::pair{"holdout", &r.holdout}})
      for (const auto& x : *rows) w.row({name, std::to_string(D), str(x.n), str(x.delta), str(x.value)});
    s.write("audit_meanvalue.csv", csv.str());
    s.write_json("audit_meanvalue.json", {{"d", D},
                                          {"trend", values_json(r.trend)},
                                          {"slope", r.slope},
                                          {"slope_lower95", r.slope_lower95},
                                          {"trend_ok", r.trend_ok},
                                          {"k_a", r.k_a},
                                          {"holdout", values_json(r.holdout)},
                                          {"holdout_ok", r.holdout_ok},
                                          {"holdout_above_twice_k_a", r.holdout_flag}});
    std::cout << "mean value d=" << D << ": slope " << r.slope << " (one-sided 95% lower " << r.slope_lower95
              << "), K_a " << r.k_a << "\n";
    return r.pass() ? kOk : kAssertion;
  });
}

int run_audit_annulus(Session& s, const StudyArgs& a) {
  if (a.d != 2) throw ConfigError("audit annulus: only d = 2 is supported");
  const auto r = annulus_study<2>(a.calibration, a.holdout);
  std::ostringstream csv;
  CsvWriter w(csv, {"set", "n", "delta", "sites", "worst_ratio", "violations"});
  for (const auto& x : r.calibration)
    w.row({"calibration", str(x.n), str(x.delta), std::to_string(x.sites), str(x.worst_ratio), "0"});
  for (const auto& x : r.holdout)
    w.row({"holdout", str(x.n), str(x.delta), std::to_string(x.sites), str(x.worst_ratio),
           std::to_string(x.violations)});
  s.write("audit_annulus.csv", csv.str());
  s.write_json("audit_annulus.json", {{"k_b", r.k_b}, {"holdout_above_twice_k_b", r.holdout_flag}, {"pass", r.pass()}});
  std::cout << "annulus: K_b " << r.k_b << (r.pass() ? ", holdout within K_b" : ", holdout exceeds K_b") << "\n";
  return r.pass() ? kOk : kAssertion;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Internal DLA and flashing-process experiments"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file mirroring the flags");
  app.require_subcommand(1);
  app.fallthrough();

  std::string out = "idla_out";
  std::uint64_t seed = 1;
  app.add_option("--out", out, "Output directory")->capture_default_str();
  app.add_option("--seed", seed, "Base seed")->capture_default_str();

  GrowArgs grow;
  auto* grow_cmd = app.add_subcommand("grow", "Grow one cluster of |B(0,n)| explorers");
  grow_cmd->add_option("--model", grow.model, "idla | flashing")->capture_default_str();
  grow_cmd->add_option("--d", grow.d, "Dimension (2..4)")->capture_default_str();
  grow_cmd->add_option("--n", grow.n, "Radius")->capture_default_str();
  grow_cmd->add_option("--engine", grow.engine, "step | jump")->capture_default_str();
  grow_cmd->add_option("--h0", grow.h, "Shell width (flashing)")->capture_default_str();

  CoupleArgs couple;
  auto* couple_cmd = app.add_subcommand("couple", "Coupled IDLA / flashing run");
  couple_cmd->add_option("--n-explorers", couple.explorers, "Explorers")->capture_default_str();
  couple_cmd->add_option("--d", couple.d, "Dimension (2..4)")->capture_default_str();
  couple_cmd->add_option("--h0", couple.h, "Shell width")->capture_default_str();

  ScalingArgs scaling;
  auto* scaling_cmd = app.add_subcommand("scaling", "Fluctuation scaling experiment");
  scaling_cmd->add_option("--model", scaling.model, "idla | flashing")->capture_default_str();
  scaling_cmd->add_option("--d", scaling.d, "Dimension (2..4)")->capture_default_str();
  scaling_cmd->add_option("--radii", scaling.radii, "Increasing radii")->delimiter(',')->capture_default_str();
  scaling_cmd->add_option("--seeds", scaling.seeds, "Runs per radius (>= 30)")->capture_default_str();
  scaling_cmd->add_option("--h0", scaling.h, "Shell width (flashing)")->capture_default_str();
  scaling_cmd->add_option("--engine", scaling.engine, "step | jump")->capture_default_str();
  scaling_cmd->add_option("--max-steps", scaling.max_steps, "Total step budget, 0 = none")->capture_default_str();
  scaling_cmd->add_option("--bootstrap", scaling.bootstrap, "Bootstrap resamples")->capture_default_str();
  scaling_cmd->add_option("--calibration", scaling.calibration, "Radii fitting the flashing bracket")->delimiter(',');
  scaling_cmd->add_option("--holdout", scaling.holdout, "Radii validating the flashing bracket")->delimiter(',');

  auto* audit_cmd = app.add_subcommand("audit", "Lemma and oracle audits");
  audit_cmd->require_subcommand(1);

  std::size_t mgf_instances = 10000;
  auto* mgf_cmd = audit_cmd->add_subcommand("mgf", "Bernoulli MGF comparison on random instances");
  mgf_cmd->add_option("--instances", mgf_instances, "Random instances")->capture_default_str();

  std::uint64_t coupon_trials = 100000;
  auto* coupon_cmd = audit_cmd->add_subcommand("coupon", "Coupon-collector tail bound");
  coupon_cmd->add_option("--trials", coupon_trials, "Trials per configuration")->capture_default_str();

  UniformArgs uniform;
  auto* uniform_cmd = audit_cmd->add_subcommand("uniform", "Uniform hitting of cells");
  uniform_cmd->add_option("--d", uniform.d, "Dimension (2..4)")->capture_default_str();
  uniform_cmd->add_option("--h0", uniform.h, "Shell width")->capture_default_str();
  uniform_cmd->add_option("--shell", uniform.shell, "Shell index j >= 1")->capture_default_str();
  uniform_cmd->add_option("--anchors", uniform.anchors, "Anchors on Sigma_j")->capture_default_str();
  uniform_cmd->add_option("--samples", uniform.samples, "Samples per anchor")->capture_default_str();
  uniform_cmd->add_option("--ratio-ceiling", uniform.ratio_ceiling, "Max/min weight ceiling")->capture_default_str();
  uniform_cmd->add_option("--engine", uniform.engine, "step | jump")->capture_default_str();

  PotentialArgs potential;
  auto* potential_cmd = audit_cmd->add_subcommand("potential", "Green table identities and exit time");
  potential_cmd->add_option("--d", potential.d, "Dimension (2..4)")->capture_default_str();
  potential_cmd->add_option("--n", potential.n, "Ball radius")->capture_default_str();
  potential_cmd->add_option("--walks", potential.walks, "Monte Carlo walks")->capture_default_str();
  potential_cmd->add_flag("--green-table", potential.table, "Also write the Green table CSV");

  StudyArgs meanvalue{2, {20, 30, 40}, {10, 15, 20, 25, 30, 35}, {40}};
  auto* meanvalue_cmd = audit_cmd->add_subcommand("meanvalue", "Mean value discrepancy on the outer rim");
  meanvalue_cmd->add_option("--d", meanvalue.d, "Dimension (2..4)")->capture_default_str();
  meanvalue_cmd->add_option("--trend", meanvalue.trend, "Radii for the trend")->delimiter(',')->capture_default_str();
  meanvalue_cmd->add_option("--calibration", meanvalue.calibration, "Radii fitting K_a")
      ->delimiter(',')
      ->capture_default_str();
  meanvalue_cmd->add_option("--holdout", meanvalue.holdout, "Radii checked against K_a")
      ->delimiter(',')
      ->capture_default_str();

  StudyArgs annulus{2, {}, {10, 15, 20, 25, 30}, {35, 40}};
  auto* annulus_cmd = audit_cmd->add_subcommand("annulus", "Annulus time expansion gap");
  annulus_cmd->add_option("--d", annulus.d, "Dimension (2 only)")->capture_default_str();
  annulus_cmd->add_option("--calibration", annulus.calibration, "Radii fitting K_b")
      ->delimiter(',')
      ->capture_default_str();
  annulus_cmd->add_option("--holdout", annulus.holdout, "Radii checked against K_b")
      ->delimiter(',')
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  const auto start = std::chrono::steady_clock::now();
  Session s;
  s.out = out;
  s.seed = seed;
  s.config = echo_options(&app);
  for (const CLI::App* sub = &app; !sub->get_subcommands().empty();) {
    sub = sub->get_subcommands().front();
    s.command += (s.command.empty() ? "" : " ") + sub->get_name();
  }

  int code = kOk;
  std::string error;
  try {
    std::error_code ec;
    fs::create_directories(s.out, ec);
    if (ec) throw ConfigError("cannot create " + s.out.string() + ": " + ec.message());
    if (grow_cmd->parsed())
      code = run_grow(s, grow);
    else if (couple_cmd->parsed())
      code = run_couple(s, couple);
    else if (scaling_cmd->parsed())
      code = run_scaling(s, scaling);
    else if (mgf_cmd->parsed())
      code = run_audit_mgf(s, mgf_instances);
    else if (coupon_cmd->parsed())
      code = run_audit_coupon(s, coupon_trials);
    else if (uniform_cmd->parsed())
      code = run_audit_uniform(s, uniform);
    else if (potential_cmd->parsed())
      code = run_audit_potential(s, potential);
    else if (meanvalue_cmd->parsed())
      code = run_audit_meanvalue(s, meanvalue);
    else if (annulus_cmd->parsed())
      code = run_audit_annulus(s, annulus);
  } catch (const ConfigError& e) {
    error = e.what();
    code = kConfig;
  } catch (const BudgetExceeded& e) {
    error = e.what();
    code = kBudget;
  } catch (const std::exception& e) {  // InvariantViolation, SolverError and anything unexpected
    error = e.what();
    code = kAssertion;
  }
  if (!error.empty()) std::cerr << "error: " << error << "\n";

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (fs::is_directory(s.out)) {
    char hash[32];
    std::snprintf(hash, sizeof hash, "fnv1a64:%016llx", static_cast<unsigned long long>(fnv1a(s.config.dump())));
    json manifest{{"schema_version", kSchemaVersion},
                  {"command", s.command},
                  {"config", s.config},
                  {"config_hash", hash},
                  {"seed", s.seed},
                  {"git_describe", IDLA_GIT_DESCRIBE},
                  {"wall_time_seconds", wall},
                  {"files", s.files},
                  {"exit_code", code}};
    if (!error.empty()) manifest["error"] = error;
    std::ofstream(s.out / "manifest.json", std::ios::binary) << manifest.dump(2) << "\n";
  }
  return code;
}
