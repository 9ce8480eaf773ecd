#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "fraclab/capacity.hpp"
#include "fraclab/constants.hpp"
#include "fraclab/domain.hpp"
#include "fraclab/errors.hpp"
#include "fraclab/hardy.hpp"
#include "fraclab/io.hpp"
#include "fraclab/kfunctional.hpp"
#include "fraclab/norms.hpp"
#include "fraclab/parallel.hpp"
#include "fraclab/random.hpp"

namespace fraclab::app {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// ---- config access ------------------------------------------------------

void check_keys(const json& c, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!c.is_object()) throw ConfigError(where + ": expected a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : c.items()) {
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

double get_double(const json& c, const char* key, std::optional<double> fallback = std::nullopt) {
  if (!c.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(std::string("missing key '") + key + "'");
  }
  if (!c.at(key).is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  const double x = c.at(key).get<double>();
  if (!std::isfinite(x)) throw ConfigError(std::string("'") + key + "' must be finite");
  return x;
}

long get_int(const json& c, const char* key, std::optional<long> fallback = std::nullopt) {
  if (!c.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(std::string("missing key '") + key + "'");
  }
  if (!c.at(key).is_number_integer()) throw ConfigError(std::string("'") + key + "' must be an integer");
  return c.at(key).get<long>();
}

bool get_bool(const json& c, const char* key, bool fallback) {
  if (!c.contains(key)) return fallback;
  if (!c.at(key).is_boolean()) throw ConfigError(std::string("'") + key + "' must be true or false");
  return c.at(key).get<bool>();
}

std::vector<double> get_doubles(const json& c, const char* key, std::optional<std::vector<double>> fallback = {}) {
  if (!c.contains(key)) {
    if (fallback) return *fallback;
    throw ConfigError(std::string("missing key '") + key + "'");
  }
  const json& a = c.at(key);
  if (!a.is_array()) throw ConfigError(std::string("'") + key + "' must be a list");
  std::vector<double> out;
  for (const auto& x : a) {
    if (!x.is_number()) throw ConfigError(std::string("'") + key + "' must hold numbers");
    out.push_back(x.get<double>());
  }
  if (out.empty()) throw ConfigError(std::string("'") + key + "' must not be empty");
  return out;
}

std::vector<int> get_ints(const json& c, const char* key) {
  std::vector<int> out;
  for (double x : get_doubles(c, key)) {
    if (x != std::floor(x) || std::abs(x) > 1e6) throw ConfigError(std::string("'") + key + "' must hold integers");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

void check_s(double s) {
  if (!(s > 0.0 && s < 1.0)) throw ConfigError("s must lie in (0, 1), got " + format_double(s));
}
void check_p(double p) {
  if (!(p > 1.0) || !std::isfinite(p)) throw ConfigError("p must be > 1, got " + format_double(p));
}
void check_positive(double x, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(std::string(what) + " must be positive");
}
void check_dim(long dim) {
  if (dim != 1 && dim != 2) throw ConfigError("dim must be 1 or 2");
}

struct NamedDomain {
  std::string name;
  DomainPtr domain;
};

NamedDomain read_domain(const json& spec, const std::string& fallback_name) {
  if (!spec.is_object()) throw ConfigError("domain must be a JSON object");
  json d = spec;
  std::string name = fallback_name;
  if (d.contains("name")) {
    name = d.at("name").get<std::string>();
    d.erase("name");
  }
  check_keys(d, {"dim", "h", "box", "crack_list", "polygon_vertices", "cracked_n", "label"}, "domain " + name);
  return {name, share(domain_from_json(d))};
}

json box_json(const std::string& name, const GridDomain& d) {
  json lo = json::array(), hi = json::array();
  for (int a = 0; a < d.dim(); ++a) {
    lo.push_back(d.box_lower(a));
    hi.push_back(d.box_upper(a));
  }
  return {{"name", name}, {"h", d.spacing()}, {"lower", lo}, {"upper", hi}, {"active_nodes", d.num_active()}};
}

// Test function descriptions shared by kprofile and slimits.
GridFunction read_function(const json& spec, const DomainPtr& d, std::uint64_t seed) {
  const std::string type = spec.value("type", std::string("bump"));
  if (type == "zero") {
    check_keys(spec, {"type"}, "function");
    return GridFunction(d);
  }
  if (type == "bump") {
    check_keys(spec, {"type", "center", "radius"}, "function");
    const auto c = get_doubles(spec, "center");
    if (static_cast<int>(c.size()) != d->dim()) throw ConfigError("function center must have dim entries");
    const double r = get_double(spec, "radius");
    check_positive(r, "bump radius");
    return bump_function(d, {c[0], d->dim() == 2 ? c[1] : 0.0}, r);
  }
  if (type == "random") {
    check_keys(spec, {"type", "lo", "hi"}, "function");
    const double lo = get_double(spec, "lo", -1.0), hi = get_double(spec, "hi", 1.0);
    if (!(hi >= lo)) throw ConfigError("function range needs lo <= hi");
    std::mt19937_64 rng(seed);
    return random_grid_function(d, rng, lo, hi);
  }
  if (type == "bumps") {
    check_keys(spec, {"type", "count"}, "function");
    const long n = get_int(spec, "count", 3);
    if (n < 1 || n > 100) throw ConfigError("bumps count must lie in [1, 100]");
    std::mt19937_64 rng(seed);
    return random_bump_sum(d, rng, static_cast<int>(n));
  }
  if (type == "values") {
    check_keys(spec, {"type", "values"}, "function");
    const auto v = get_doubles(spec, "values");
    if (v.size() != d->num_active()) throw ConfigError("function values must match the active node count");
    return GridFunction(d, Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  throw ConfigError("unknown function type '" + type + "'");
}

// Runs cells in parallel and rethrows the first failure in cell order.
void run_cells(std::size_t n, const std::function<void(std::size_t)>& body) {
  std::vector<std::exception_ptr> errors(n);
  parallel_for(n, [&](std::size_t i) {
    try {
      body(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void record(CommandOutput& out, bool ok, const std::string& what) {
  if (!ok) {
    out.failures.push_back(what);
    out.exit_code = kInequalityFailed;
  }
}

// ---- constants ----------------------------------------------------------

CommandOutput cmd_constants(const json& c, const RunOptions& opt) {
  check_keys(c, {"domains", "s", "p", "slack", "with_Lambda", "eig_tol", "restarts", "Lambda_tol"}, "constants");
  if (!c.contains("domains") || !c.at("domains").is_array() || c.at("domains").empty())
    throw ConfigError("'domains' must be a nonempty list");
  std::vector<NamedDomain> domains;
  for (std::size_t i = 0; i < c.at("domains").size(); ++i)
    domains.push_back(read_domain(c.at("domains")[i], "domain" + std::to_string(i)));
  const auto s_list = get_doubles(c, "s");
  const auto p_list = get_doubles(c, "p");
  for (double s : s_list) check_s(s);
  for (double p : p_list) check_p(p);
  DoubleSideOptions dso;
  dso.slack = get_double(c, "slack", 0.05);
  dso.with_Lambda = get_bool(c, "with_Lambda", false);
  dso.eig.tol = get_double(c, "eig_tol", 1e-8);
  dso.eig.restarts = static_cast<int>(get_int(c, "restarts", 8));
  dso.eig.seed = opt.seed;
  dso.lambda.eig = dso.eig;
  dso.lambda.tol = get_double(c, "Lambda_tol", 1e-6);
  check_positive(dso.eig.tol, "eig_tol");
  check_positive(dso.lambda.tol, "Lambda_tol");
  if (!(dso.slack >= 0.0)) throw ConfigError("slack must be nonnegative");
  if (dso.eig.restarts < 1) throw ConfigError("restarts must be at least 1");

  struct Cell {
    std::size_t d;
    double s, p;
    ConstantReport report;
  };
  std::vector<Cell> cells;
  for (std::size_t d = 0; d < domains.size(); ++d)
    for (double s : s_list)
      for (double p : p_list) cells.push_back({d, s, p, {}});
  run_cells(cells.size(), [&](std::size_t i) {
    cells[i].report = doubleside_check(domains[cells[i].d].domain, cells[i].s, cells[i].p, dso);
  });

  CsvTable t({"domain", "dim", "h", "active_nodes", "s", "p", "lambda1", "lambdaS", "LambdaS_upper",
              "residual_oneside", "oneside_ok", "residual_twosideconv", "residual_equivalence", "equivalence_ratio",
              "p_equivalence_ratio"});
  CommandOutput out;
  for (const auto& cell : cells) {
    const auto& nd = domains[cell.d];
    const ConstantReport& r = cell.report;
    const double l1s = std::pow(r.lambda1, cell.s);
    const double eq = dso.with_Lambda ? cell.s * (1.0 - cell.s) * r.LambdaS_upper / l1s : kNaN;
    t.row()
        .add(nd.name)
        .add(nd.domain->dim())
        .add(nd.domain->spacing())
        .add(nd.domain->num_active())
        .add(cell.s)
        .add(cell.p)
        .add(r.lambda1)
        .add(r.lambdaS)
        .add(dso.with_Lambda ? r.LambdaS_upper : kNaN)
        .add(r.residual_oneside)
        .add(r.oneside_ok)
        .add(r.residual_twosideconv)
        .add(dso.with_Lambda ? r.residual_equivalence : kNaN)
        .add(eq)
        .add(cell.p * eq);
    record(out, r.oneside_ok,
           "oneside bound fails on " + nd.name + " s=" + format_double(cell.s) + " p=" + format_double(cell.p));
  }
  RunHeader h{"constants", opt.seed, c};
  h.tolerances = {{"eig_tol", dso.eig.tol}, {"Lambda_tol", dso.lambda.tol}, {"slack", dso.slack}};
  for (const auto& nd : domains) h.truncation_boxes.push_back(box_json(nd.name, *nd.domain));
  out.text = render_csv(h, t);
  return out;
}

// ---- counterexample -----------------------------------------------------

CommandOutput cmd_counterexample(const json& c, const RunOptions& opt) {
  check_keys(c, {"dim", "h", "s", "p", "n", "slack", "eig_tol", "scaling_tol"}, "counterexample");
  const long dim = get_int(c, "dim", 1);
  check_dim(dim);
  const double h = get_double(c, "h");
  check_positive(h, "h");
  const double s = get_double(c, "s"), p = get_double(c, "p");
  check_s(s);
  check_p(p);
  if (!(s * p < 1.0))
    throw ConfigError("counterexample needs s p < 1 (the degeneration regime); got s p = " + format_double(s * p));
  const auto n_list = get_ints(c, "n");
  for (int n : n_list)
    if (n < 0 || n > 64) throw ConfigError("n must lie in [0, 64]");
  const double slack = get_double(c, "slack", 0.05);
  const double scaling_tol = get_double(c, "scaling_tol", 1e-10);
  EigenOptions eig;
  eig.tol = get_double(c, "eig_tol", 1e-8);
  eig.seed = opt.seed;
  check_positive(eig.tol, "eig_tol");

  const SweepReport sweep = counterexample_sweep(n_list, static_cast<int>(dim), h, s, p, slack, eig);

  // uncracked cube and its (2n+1)-dilations
  const auto cube = share(make_box(static_cast<int>(dim), 1.0, h, -0.5));
  std::vector<double> scaled(n_list.size());
  double base = 0.0;
  run_cells(n_list.size() + 1, [&](std::size_t i) {
    if (i == 0) {
      base = lambdaS(cube, s, p, eig);
    } else {
      const double f = 2.0 * n_list[i - 1] + 1.0;
      scaled[i - 1] = lambdaS(share(cube->dilated(f)), s, p, eig);
    }
  });

  CsvTable t({"kind", "n", "h", "s", "p", "lambda1", "lambdaS", "mu", "ratio", "expected_lambdaS",
              "relative_error"});
  CommandOutput out;
  for (const auto& r : sweep.rows)
    t.row().add("cracked").add(r.n).add(r.h).add(r.s).add(r.p).add(r.lambda1).add(r.lambdaS).add(r.mu).add(r.ratio)
        .add(kNaN).add(kNaN);
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    const double expected = std::pow(2.0 * n_list[i] + 1.0, -s * p) * base;
    const double err = std::abs(scaled[i] - expected) / expected;
    t.row().add("uncracked_scaling").add(n_list[i]).add(h * (2.0 * n_list[i] + 1.0)).add(s).add(p).add(kNaN)
        .add(scaled[i]).add(kNaN).add(kNaN).add(expected).add(err);
    record(out, err <= scaling_tol, "dilation scaling off by " + format_double(err) + " at n=" +
                                        std::to_string(n_list[i]));
  }
  record(out, sweep.lambdaS_decreasing, "lambdaS is not strictly decreasing in n");
  record(out, sweep.lambda1_above_mu, "lambda1 falls below (1 - slack) mu");
  RunHeader hd{"counterexample", opt.seed, c};
  hd.tolerances = {{"eig_tol", eig.tol}, {"slack", slack}, {"scaling_tol", scaling_tol}};
  for (int n : n_list)
    hd.truncation_boxes.push_back(
        box_json("cracked_n" + std::to_string(n), make_cracked_domain(static_cast<int>(dim), n, h)));
  out.text = render_csv(hd, t);
  return out;
}

// ---- kprofile -----------------------------------------------------------

std::vector<double> read_t_grid(const json& c) {
  if (c.contains("t_list")) {
    auto t = get_doubles(c, "t_list");
    for (std::size_t i = 0; i < t.size(); ++i) {
      check_positive(t[i], "t");
      if (i > 0 && !(t[i] > t[i - 1])) throw ConfigError("t_list must increase");
    }
    return t;
  }
  const json g = c.value("t", json{{"t_ref", 1.0}, {"k_lo", -16}, {"k_hi", 16}, {"per_decade", 8}});
  check_keys(g, {"t_ref", "k_lo", "k_hi", "per_decade"}, "t");
  const double ref = get_double(g, "t_ref", 1.0);
  check_positive(ref, "t_ref");
  const long lo = get_int(g, "k_lo"), hi = get_int(g, "k_hi"), pd = get_int(g, "per_decade");
  if (pd < 1 || hi < lo || hi - lo > 2000) throw ConfigError("t grid needs per_decade >= 1 and 0 <= k_hi - k_lo <= 2000");
  return log_grid(ref, static_cast<int>(lo), static_cast<int>(hi), static_cast<int>(pd));
}

CommandOutput cmd_kprofile(const json& c, const RunOptions& opt) {
  check_keys(c, {"domain", "function", "p", "t", "t_list", "tol"}, "kprofile");
  if (!c.contains("domain")) throw ConfigError("missing key 'domain'");
  const NamedDomain nd = read_domain(c.at("domain"), "domain");
  const double p = get_double(c, "p");
  check_p(p);
  const std::vector<double> t = read_t_grid(c);
  KOptions ko;
  ko.tol = get_double(c, "tol", 1e-8);
  check_positive(ko.tol, "tol");
  const GridFunction u = read_function(c.value("function", json{{"type", "bump"}, {"center", std::vector<double>(
                                                                          nd.domain->dim(), 0.5)},
                                                                 {"radius", 0.25}}),
                                       nd.domain, opt.seed);

  const KProfile prof = k_profile(u, p, t, ko);
  CsvTable table({"t", "K", "lower", "residual", "min_bound", "monotone_ok", "concave_ok", "bound_ok"});
  CommandOutput out;
  const double scale = std::max(prof.u_norm, 1e-300);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double bound = std::min(prof.u_norm, t[i] * prof.grad_norm);
    const double slack = ko.tol * scale;
    const bool mono = i == 0 || prof.k[i] >= prof.k[i - 1] - slack;
    bool concave = true;
    if (i > 0 && i + 1 < t.size()) {
      const double w = (t[i] - t[i - 1]) / (t[i + 1] - t[i - 1]);
      concave = prof.k[i] >= (1.0 - w) * prof.k[i - 1] + w * prof.k[i + 1] - 2.0 * slack;
    }
    const bool below = prof.k[i] <= bound + slack;
    table.row().add(t[i]).add(prof.k[i]).add(prof.lower[i]).add(prof.residual[i]).add(bound).add(mono).add(concave)
        .add(below);
    record(out, mono && concave && below, "profile shape check fails at t=" + format_double(t[i]));
  }
  RunHeader h{"kprofile", opt.seed, c};
  h.tolerances = {{"tol_K", ko.tol}, {"u_norm", prof.u_norm}, {"grad_norm", prof.grad_norm}};
  h.truncation_boxes.push_back(box_json(nd.name, *nd.domain));
  out.text = render_csv(h, table);
  return out;
}

// ---- capacity -----------------------------------------------------------

json result_json(const CapacityResult& r) {
  json box = nullptr;
  if (r.box_used) box = box_json("box", *r.box_used);
  return {{"value", r.value},
          {"gap", r.gap},
          {"iterations", r.iterations},
          {"truncation_ok", r.truncation_ok},
          {"max_constraint_violation", r.max_constraint_violation},
          {"doubling_change", std::isnan(r.doubling_change) ? json(nullptr) : json(r.doubling_change)},
          {"box", box}};
}

CommandOutput cmd_capacity(const json& c, const RunOptions& opt) {
  check_keys(c, {"dim", "h", "s", "p", "sets", "kinds", "box_factor", "tol", "doubling", "sandwich", "sandwich_slack",
                 "flat_crack", "max_free"},
             "capacity");
  const long dim = get_int(c, "dim");
  check_dim(dim);
  const double h = get_double(c, "h");
  check_positive(h, "h");
  const double s = get_double(c, "s"), p = get_double(c, "p");
  check_s(s);
  check_p(p);
  const double factor = get_double(c, "box_factor", 8.0);
  if (!(factor >= 2.0)) throw ConfigError("box_factor must be at least 2");
  CapacityOptions co;
  co.tol = get_double(c, "tol", 1e-6);
  co.doubling = get_bool(c, "doubling", false);
  co.max_free = static_cast<std::size_t>(get_int(c, "max_free", 200));
  check_positive(co.tol, "tol");
  const bool sandwich = get_bool(c, "sandwich", false);
  const double sandwich_slack = get_double(c, "sandwich_slack", 1.05);
  std::vector<std::string> kinds{"cap_sp"};
  if (c.contains("kinds")) {
    kinds.clear();
    for (const auto& k : c.at("kinds")) kinds.push_back(k.get<std::string>());
    for (const auto& k : kinds)
      if (k != "cap_sp" && k != "cap_local" && k != "int_cap") throw ConfigError("unknown capacity kind '" + k + "'");
  }
  const bool needs_small = sandwich || std::count(kinds.begin(), kinds.end(), "int_cap") > 0;

  struct Set {
    std::string name;
    std::vector<Point2> points;
    CapacitySetup setup;
    json result = json::object();
  };
  std::vector<Set> sets;
  if (c.contains("sets")) {
    if (!c.at("sets").is_array()) throw ConfigError("'sets' must be a list");
    for (std::size_t i = 0; i < c.at("sets").size(); ++i) {
      const json& sj = c.at("sets")[i];
      check_keys(sj, {"name", "points"}, "set");
      Set st;
      st.name = sj.value("name", "set" + std::to_string(i));
      for (const auto& q : sj.value("points", json::array())) {
        const auto v = q.get<std::vector<double>>();
        if (static_cast<long>(v.size()) != dim) throw ConfigError("set points must have dim coordinates");
        st.points.push_back({v[0], dim == 2 ? v[1] : 0.0});
      }
      if (!st.points.empty()) {
        st.setup = capacity_box(static_cast<int>(dim), h, st.points, factor);
        if (needs_small && st.setup.box->num_active() > co.max_free)
          throw ConfigError("set '" + st.name + "' needs " + std::to_string(st.setup.box->num_active()) +
                            " free nodes; the interpolation capacity allows at most " + std::to_string(co.max_free));
      }
      sets.push_back(std::move(st));
    }
  }
  std::optional<json> fc_cfg;
  std::vector<double> fc_eps, fc_h;
  double fc_a = 0.0;
  if (c.contains("flat_crack")) {
    fc_cfg = c.at("flat_crack");
    check_keys(*fc_cfg, {"a", "epsilon", "h"}, "flat_crack");
    fc_a = get_double(*fc_cfg, "a", dim == 2 ? 0.25 : 0.0);
    fc_eps = get_doubles(*fc_cfg, "epsilon");
    fc_h = get_doubles(*fc_cfg, "h");
    if (!(s * p < 1.0)) throw ConfigError("flat_crack needs s p < 1");
    for (double e : fc_eps) check_positive(e, "epsilon");
    for (double x : fc_h) check_positive(x, "h");
  }

  CommandOutput out;
  struct Job {
    std::size_t set;
    std::string key;
    std::function<json()> run;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const Set& st = sets[i];
    if (st.points.empty()) continue;
    const CapacitySetup& su = st.setup;
    for (const auto& k : kinds) {
      jobs.push_back({i, k, [&su, k, s, p, co] {
                        if (k == "cap_sp") return result_json(cap_sp(su.nodes, su.box, s, p, co));
                        if (k == "cap_local") return result_json(cap_local(su.nodes, su.box, p, co));
                        return result_json(int_cap_sp(su.nodes, su.box, s, p, co));
                      }});
    }
    if (sandwich) {
      jobs.push_back({i, "sandwich", [&su, s, p, co, sandwich_slack] {
                        const CapacitySandwich sw = capacity_sandwich(su.nodes, su.box, s, p, sandwich_slack, co);
                        return json{{"cap", sw.cap}, {"int_cap", sw.int_cap}, {"constant", sw.constant},
                                    {"holds", sw.holds}};
                      }});
    }
  }
  if (fc_cfg) {
    jobs.push_back({sets.size(), "flat_crack", [&] {
                      const FlatCrackReport r = flat_crack_law(static_cast<int>(dim), fc_a, fc_eps, fc_h, s, p);
                      json rows = json::array();
                      for (const auto& row : r.rows)
                        rows.push_back({{"epsilon", row.epsilon}, {"h", row.h}, {"bound", row.bound},
                                        {"skipped", row.skipped}, {"note", row.note}});
                      return json{{"a", fc_a},
                                  {"rows", rows},
                                  {"slope", r.slope},
                                  {"slope_h", r.slope_h},
                                  {"expected_slope", r.expected_slope},
                                  {"h_spread", r.h_spread}};
                    }});
  }
  std::vector<json> slots(jobs.size());
  run_cells(jobs.size(), [&](std::size_t i) { slots[i] = jobs[i].run(); });
  json flat = nullptr;
  for (auto& st : sets) {
    if (st.points.empty())
      for (const auto& k : kinds) st.result[k] = {{"value", 0.0}, {"box", nullptr}};
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (jobs[i].set == sets.size()) {
      flat = slots[i];
    } else {
      sets[jobs[i].set].result[jobs[i].key] = slots[i];
    }
  }

  json result = {{"sets", json::array()}};
  for (const auto& st : sets) {
    json pts = json::array();
    for (const auto& q : st.points) pts.push_back(dim == 2 ? json{q[0], q[1]} : json{q[0]});
    json e = st.result;
    e["name"] = st.name;
    e["points"] = pts;
    result["sets"].push_back(e);
    for (const auto& k : kinds) {
      if (st.result.at(k).contains("truncation_ok"))
        record(out, st.result.at(k).at("truncation_ok").get<bool>(), st.name + ": " + k + " minimizer exceeds 1");
    }
    if (sandwich && !st.points.empty())
      record(out, st.result.at("sandwich").at("holds").get<bool>(), st.name + ": capacity sandwich fails");
  }
  if (fc_cfg) {
    result["flat_crack"] = flat;
    const double slope = flat.at("slope").get<double>();
    record(out, slope >= (1.0 - s * p) - 0.2,
           "flat crack slope " + format_double(slope) + " below " + format_double(1.0 - s * p - 0.2));
  }
  RunHeader hd{"capacity", opt.seed, c};
  hd.tolerances = {{"tol_cap", co.tol}, {"sandwich_slack", sandwich_slack}, {"box_factor", factor}};
  for (const auto& st : sets)
    if (st.setup.box) hd.truncation_boxes.push_back(box_json(st.name, *st.setup.box));
  out.text = render_json(hd, result);
  out.json = true;
  return out;
}

// ---- hardy --------------------------------------------------------------

CommandOutput cmd_hardy(const json& c, const RunOptions& opt) {
  check_keys(c, {"p", "alpha", "s", "random_profiles", "profile_nodes", "profile_csv", "sharpness_delta",
                 "picone_pairs", "xnorm", "tol_quad", "picone_tol"},
             "hardy");
  const auto p_list = get_doubles(c, "p", std::vector<double>{1.5, 2.0, 3.0});
  const auto alpha_extra = get_doubles(c, "alpha", std::vector<double>{0.5});
  const auto s_list = get_doubles(c, "s", std::vector<double>{0.3, 0.7});
  for (double p : p_list) check_p(p);
  for (double a : alpha_extra) check_positive(a, "alpha");
  for (double s : s_list) check_s(s);
  const long n_random = get_int(c, "random_profiles", 10);
  const long nodes = get_int(c, "profile_nodes", 4000);
  if (n_random < 0 || n_random > 10000) throw ConfigError("random_profiles must lie in [0, 10000]");
  if (nodes < 16 || nodes > 1000000) throw ConfigError("profile_nodes must lie in [16, 1e6]");
  const auto deltas = get_doubles(c, "sharpness_delta", std::vector<double>{1e-2, 1e-4, 1e-8, 1e-16, 1e-32});
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > 0.0 && deltas[i] < 0.5)) throw ConfigError("sharpness_delta must lie in (0, 0.5)");
    if (i > 0 && !(deltas[i] < deltas[i - 1])) throw ConfigError("sharpness_delta must decrease");
  }
  const long pairs = get_int(c, "picone_pairs", 50);
  if (pairs < 0 || pairs > 10000) throw ConfigError("picone_pairs must lie in [0, 10000]");
  const double tol_quad = get_double(c, "tol_quad", 1e-4);
  const double picone_tol = get_double(c, "picone_tol", 1e-6);

  std::vector<std::pair<std::string, Profile1D>> profiles;
  for (long k = 0; k < n_random; ++k)
    profiles.emplace_back("random" + std::to_string(k),
                          random_vanishing_profile(derive_seed(opt.seed, static_cast<std::uint64_t>(k)), 1.0,
                                                   static_cast<std::size_t>(nodes)));
  if (c.contains("profile_csv")) {
    for (const auto& path : c.at("profile_csv")) {
      const std::string ps = path.get<std::string>();
      Profile1D f = parse_profile_csv(read_text_file(ps));
      validate_profile(f);
      if (f.f.front() != 0.0 || f.fprime.front() != 0.0) throw ConfigError(ps + ": profile must vanish near 0");
      profiles.emplace_back(ps, std::move(f));
    }
  }
  std::optional<json> xcfg;
  if (c.contains("xnorm")) {
    xcfg = c.at("xnorm");
    check_keys(*xcfg, {"dim", "h", "side", "radius"}, "xnorm");
    check_dim(get_int(*xcfg, "dim", 1));
    check_positive(get_double(*xcfg, "h", 1.0 / 32), "xnorm h");
    check_positive(get_double(*xcfg, "side", 4.0), "xnorm side");
    check_positive(get_double(*xcfg, "radius", 0.5), "xnorm radius");
  }

  struct Row {
    std::string check, profile;
    double p, alpha, s, lhs, rhs, constant, margin, relative;
    bool ok;
  };
  std::vector<std::vector<Row>> blocks;
  std::vector<std::function<std::vector<Row>()>> jobs;
  for (const auto& [name, f] : profiles) {
    jobs.push_back([&, name = name, &f = f] {
      std::vector<Row> rows;
      for (double p : p_list) {
        std::vector<std::pair<double, double>> alphas;  // (alpha, s)
        for (double a : alpha_extra) alphas.emplace_back(a, kNaN);
        alphas.emplace_back(p - 1.0, kNaN);
        for (double s : s_list) alphas.emplace_back(p + s * p, s);
        for (const auto& [a, s] : alphas) {
          const HardyTerms r = hardy_terms(f, a, p);
          const double rel = r.rhs > 0.0 ? r.margin / r.rhs : 0.0;
          rows.push_back({"hardy", name, p, a, s, r.lhs, r.rhs, r.constant, r.margin, rel, r.margin >= -tol_quad * r.rhs});
        }
      }
      return rows;
    });
  }
  for (double p : p_list) {
    std::vector<double> alphas = alpha_extra;
    alphas.push_back(p - 1.0);
    for (double s : s_list) alphas.push_back(p + s * p);
    for (double a : alphas) {
      jobs.push_back([&, p, a] {
        std::vector<Row> rows;
        double prev = std::numeric_limits<double>::infinity();
        for (double delta : deltas) {
          const HardyTerms r = hardy_terms(power_cutoff_profile(a / p, delta, 1.0), a, p);
          const double rel = r.margin / r.rhs;
          rows.push_back({"sharpness", "cutoff_delta=" + format_double(delta), p, a, kNaN, r.lhs, r.rhs, r.constant,
                          r.margin, rel, rel >= -tol_quad && rel <= prev});
          prev = rel;
        }
        return rows;
      });
    }
  }
  for (long k = 0; k < pairs; ++k) {
    jobs.push_back([&, k] {
      std::vector<Row> rows;
      const auto base = static_cast<std::uint64_t>(n_random + 2 * k);
      const Profile1D u = random_positive_profile(derive_seed(opt.seed, base), 1.0, 2001);
      const Profile1D v = random_nonnegative_profile(derive_seed(opt.seed, base + 1), 1.0, 2001);
      for (double p : p_list) {
        const PiconeResult r = picone_check(u, v, p);
        rows.push_back({"picone", "pair" + std::to_string(k), p, kNaN, kNaN, r.min_value, r.scale, kNaN, r.min_value,
                        r.scale > 0.0 ? r.min_value / r.scale : 0.0, r.min_value >= -picone_tol * r.scale});
      }
      return rows;
    });
  }
  if (xcfg) {
    jobs.push_back([&] {
      const int dim = static_cast<int>(get_int(*xcfg, "dim", 1));
      const double hx = get_double(*xcfg, "h", 1.0 / 32), side = get_double(*xcfg, "side", 4.0);
      const double radius = get_double(*xcfg, "radius", 0.5);
      const auto d = share(make_box(dim, side, hx, -0.5 * side));
      const GridFunction u = bump_function(d, {0.0, 0.0}, radius);
      const auto count = static_cast<std::size_t>(std::lround(0.5 * side / hx));
      std::vector<double> rho(count);
      for (std::size_t k = 0; k < count; ++k) rho[k] = hx * static_cast<double>(k + 1);
      std::vector<Row> rows;
      for (double p : p_list) {
        const std::vector<double> ub = spherical_average_samples(u, p, count);
        for (double s : s_list) {
          const HardyXNormTerms r = hardy_in_xnorm_terms(rho, ub, s, p);
          const double rel = r.average_side > 0.0 ? r.margin / r.average_side : 0.0;
          rows.push_back({"xnorm", "bump_dim" + std::to_string(dim), p, p + s * p, s, r.primitive_side,
                          r.average_side, r.constant, r.margin, rel, rel >= -tol_quad});
        }
      }
      return rows;
    });
  }
  blocks.resize(jobs.size());
  run_cells(jobs.size(), [&](std::size_t i) { blocks[i] = jobs[i](); });

  CsvTable t({"check", "profile", "p", "alpha", "s", "lhs", "rhs", "constant", "margin", "relative_margin", "ok"});
  CommandOutput out;
  for (const auto& b : blocks) {
    for (const Row& r : b) {
      t.row().add(r.check).add(r.profile).add(r.p).add(r.alpha).add(r.s).add(r.lhs).add(r.rhs).add(r.constant)
          .add(r.margin).add(r.relative).add(r.ok);
      record(out, r.ok, r.check + " " + r.profile + " p=" + format_double(r.p) + " alpha=" + format_double(r.alpha));
    }
  }
  RunHeader hd{"hardy", opt.seed, c};
  hd.tolerances = {{"tol_quad", tol_quad}, {"picone_tol", picone_tol}};
  out.text = render_csv(hd, t);
  return out;
}

// ---- geometry -----------------------------------------------------------

CommandOutput cmd_geometry(const json& c, const RunOptions& opt) {
  check_keys(c, {"polygons", "random_polygons", "t", "cone_beta", "samples_per_edge", "tol"}, "geometry");
  std::vector<std::pair<std::string, ConvexPolygon>> polys;
  if (c.contains("polygons")) {
    for (std::size_t i = 0; i < c.at("polygons").size(); ++i) {
      const json& pj = c.at("polygons")[i];
      check_keys(pj, {"name", "vertices", "regular", "rectangle"}, "polygon");
      const std::string name = pj.value("name", "polygon" + std::to_string(i));
      if (pj.contains("vertices")) {
        std::vector<Point2> v;
        for (const auto& q : pj.at("vertices")) {
          const auto xy = q.get<std::vector<double>>();
          if (xy.size() != 2) throw ConfigError("polygon vertices are pairs");
          v.push_back({xy[0], xy[1]});
        }
        polys.emplace_back(name, ConvexPolygon(std::move(v)));
      } else if (pj.contains("regular")) {
        const json& r = pj.at("regular");
        const long sides = get_int(r, "sides");
        if (sides < 3 || sides > 10000) throw ConfigError("regular polygon needs 3..10000 sides");
        const double radius = get_double(r, "radius", 1.0);
        check_positive(radius, "radius");
        polys.emplace_back(name, ConvexPolygon::regular(static_cast<int>(sides), radius));
      } else if (pj.contains("rectangle")) {
        const auto wh = get_doubles(pj, "rectangle");
        if (wh.size() != 2) throw ConfigError("rectangle is [width, height]");
        check_positive(wh[0], "width");
        check_positive(wh[1], "height");
        polys.emplace_back(name, ConvexPolygon::rectangle(wh[0], wh[1]));
      } else {
        throw ConfigError("polygon needs 'vertices', 'regular' or 'rectangle'");
      }
    }
  }
  const long n_random = get_int(c, "random_polygons", 0);
  if (n_random < 0 || n_random > 10000) throw ConfigError("random_polygons must lie in [0, 10000]");
  std::mt19937_64 rng(opt.seed);
  for (long k = 0; k < n_random; ++k) polys.emplace_back("random" + std::to_string(k), random_convex_polygon(rng));
  const auto t_list = get_doubles(c, "t", std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
  for (double t : t_list)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("t must lie in (0, 1)");
  const auto betas = get_doubles(c, "cone_beta", std::vector<double>{0.0});
  for (double b : betas)
    if (!(b > -1.0 && b < 1.0)) throw ConfigError("cone_beta must lie in (-1, 1)");
  const long spe = get_int(c, "samples_per_edge", 16);
  if (spe < 1 || spe > 100000) throw ConfigError("samples_per_edge must lie in [1, 1e5]");
  const double tol = get_double(c, "tol", kGeometryTolerance);

  struct PolyRows {
    Incircle ic{};
    double diameter = 0.0, ecc = 0.0;
    std::vector<DistanceMargin> margins;
  };
  std::vector<PolyRows> res(polys.size());
  run_cells(polys.size(), [&](std::size_t i) {
    const ConvexPolygon& poly = polys[i].second;
    res[i].ic = inradius_incenter(poly);
    res[i].diameter = poly.diameter();
    res[i].ecc = eccentricity(poly);
    for (double t : t_list) res[i].margins.push_back(scaled_distance_check(poly, t, static_cast<int>(spe)));
  });

  CsvTable table({"kind", "name", "param", "inradius", "diameter", "eccentricity", "min_distance", "required",
                  "margin", "ok"});
  CommandOutput out;
  for (double b : betas) {
    table.row().add("cone").add("cone").add(b).add(kNaN).add(kNaN).add(cone_eccentricity(b)).add(kNaN).add(kNaN)
        .add(kNaN).add(true);
  }
  for (std::size_t i = 0; i < polys.size(); ++i) {
    for (std::size_t k = 0; k < t_list.size(); ++k) {
      const DistanceMargin& m = res[i].margins[k];
      const bool ok = m.margin >= -tol;
      table.row().add("scaled_distance").add(polys[i].first).add(t_list[k]).add(res[i].ic.radius).add(res[i].diameter)
          .add(res[i].ecc).add(m.min_distance).add(m.required).add(m.margin).add(ok);
      record(out, ok, polys[i].first + ": scaled distance margin " + format_double(m.margin) + " at t=" +
                          format_double(t_list[k]));
    }
  }
  RunHeader hd{"geometry", opt.seed, c};
  hd.tolerances = {{"tol_geom", tol}};
  out.text = render_csv(hd, table);
  return out;
}

// ---- slimits ------------------------------------------------------------

CommandOutput cmd_slimits(const json& c, const RunOptions& opt) {
  check_keys(c, {"domain", "function", "s", "p"}, "slimits");
  if (!c.contains("domain")) throw ConfigError("missing key 'domain'");
  const NamedDomain nd = read_domain(c.at("domain"), "domain");
  const auto s_list = get_doubles(c, "s", std::vector<double>{0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95});
  const auto p_list = get_doubles(c, "p", std::vector<double>{2.0});
  for (double s : s_list) check_s(s);
  for (double p : p_list) check_p(p);
  const GridFunction u = read_function(c.value("function", json{{"type", "bumps"}, {"count", 3}}), nd.domain, opt.seed);

  struct Cell {
    double s, p, lp, grad, box, lattice;
    MathConstants mc;
  };
  std::vector<Cell> cells;
  for (double p : p_list)
    for (double s : s_list) cells.push_back({s, p, 0, 0, 0, 0, {}});
  run_cells(cells.size(), [&](std::size_t i) {
    Cell& k = cells[i];
    k.lp = lp_norm_pow(u, k.p);
    k.grad = grad_seminorm_pow(u, k.p);
    k.box = gagliardo_global_pow(u, k.s, k.p);
    k.lattice = lattice_seminorm_pow(u, k.s, k.p);
    k.mc = math_constants(nd.domain->dim(), k.p);
  });
  CsvTable t({"s", "p", "lp_pow", "grad_pow", "gagliardo_box_pow", "gagliardo_lattice_pow", "s_weighted",
              "one_minus_s_weighted", "beta_lp", "alpha_grad"});
  for (const auto& k : cells)
    t.row().add(k.s).add(k.p).add(k.lp).add(k.grad).add(k.box).add(k.lattice).add(k.s * k.lattice)
        .add((1.0 - k.s) * k.lattice).add(k.mc.beta * k.lp).add(k.mc.alpha * k.grad);
  RunHeader hd{"slimits", opt.seed, c};
  hd.truncation_boxes.push_back(box_json(nd.name, *nd.domain));
  CommandOutput out;
  out.text = render_csv(hd, t);
  return out;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"constants", "counterexample", "kprofile", "capacity",
                                              "hardy",     "geometry",       "slimits"};
  return names;
}

CommandOutput run_command(const std::string& name, const json& config, const RunOptions& opt) {
  set_num_threads(opt.threads);
  static const std::map<std::string, CommandOutput (*)(const json&, const RunOptions&)> table{
      {"constants", cmd_constants}, {"counterexample", cmd_counterexample}, {"kprofile", cmd_kprofile},
      {"capacity", cmd_capacity},   {"hardy", cmd_hardy},                   {"geometry", cmd_geometry},
      {"slimits", cmd_slimits}};
  const auto it = table.find(name);
  if (it == table.end()) throw ConfigError("unknown command '" + name + "'");
  try {
    return it->second(config, opt);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

}  // namespace fraclab::app
