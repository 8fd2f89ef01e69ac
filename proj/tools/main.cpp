// Command-line front end: simulate ground truth, estimate demand matrices,
// run the particle filter, and summarize result directories.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "odce/errors.hpp"
#include "odce/io.hpp"
#include "odce/odestim.hpp"
#include "odce/pfilter.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitDegenerate = 3;

struct FilterSettings {
  odce::FilterConfig cfg;
  double packet_scale = 10.0;
  double capacity_factor = 4.0;
  double beta = 1.0;
};

struct RunSettings {
  odce::Scenario scenario;
  FilterSettings filter;
};

void expect_keys(const json& j, const std::vector<std::string>& allowed,
                 const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw odce::ConfigError("unknown config key '" + where + key + "'");
  }
}

double get_number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw odce::ConfigError(std::string("config key '") + key + "' must be a number");
  return j.at(key).get<double>();
}

int get_int(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer())
    throw odce::ConfigError(std::string("config key '") + key + "' must be an integer");
  return j.at(key).get<int>();
}

bool get_bool(const json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean())
    throw odce::ConfigError(std::string("config key '") + key + "' must be a boolean");
  return j.at(key).get<bool>();
}

std::string get_string(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string())
    throw odce::ConfigError(std::string("config key '") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

odce::CostModel parse_cost_model(const json& j) {
  expect_keys(j, {"kind", "a", "b", "gamma"}, "cost_model.");
  odce::CostModel m;
  const std::string kind = get_string(j, "kind", "affine");
  if (kind == "affine") m.kind = odce::CostKind::kAffine;
  else if (kind == "power") m.kind = odce::CostKind::kPower;
  else if (kind == "constant_random") m.kind = odce::CostKind::kConstantRandom;
  else throw odce::ConfigError("cost_model.kind must be affine, power, or constant_random");
  m.a = get_number(j, "a", 1.0);
  m.b = get_number(j, "b", 1.0);
  m.gamma = get_number(j, "gamma", 1.0);
  return m;
}

odce::Constraint parse_constraint(const json& j, int n) {
  expect_keys(j, {"mode", "mask", "k"}, "constraint.");
  odce::Constraint c;
  const std::string mode = get_string(j, "mode", "none");
  if (mode == "none") {
    c.mode = odce::ConstraintMode::kNone;
  } else if (mode == "fixed_zeros") {
    c.mode = odce::ConstraintMode::kFixedZeros;
    if (!j.contains("mask") || !j.at("mask").is_array())
      throw odce::ConfigError("constraint.mask must be an array of 0/1 flags");
    for (const auto& v : j.at("mask")) {
      const int bit = v.get<int>();
      if (bit != 0 && bit != 1) throw odce::ConfigError("constraint.mask entries must be 0 or 1");
      c.mask.push_back(static_cast<std::uint8_t>(bit));
    }
    if (static_cast<int>(c.mask.size()) != n)
      throw odce::ConfigError("constraint.mask needs one entry per couple");
  } else if (mode == "fixed_k") {
    c.mode = odce::ConstraintMode::kFixedK;
    const int k = get_int(j, "k", 0);
    if (k < 0 || k > n) throw odce::ConfigError("constraint.k must lie in [0, n]");
    c.k_active = static_cast<std::size_t>(k);
  } else {
    throw odce::ConfigError("constraint.mode must be none, fixed_zeros, or fixed_k");
  }
  return c;
}

odce::CeConfig parse_ce(const json& j) {
  expect_keys(j, {"n_samples", "rho", "stop_window", "alpha", "max_iters"}, "ce.");
  odce::CeConfig ce;
  const int n_samples = get_int(j, "n_samples", 0);
  if (n_samples < 0) throw odce::ConfigError("ce.n_samples must be nonnegative");
  ce.n_samples = static_cast<std::size_t>(n_samples);
  ce.rho = get_number(j, "rho", ce.rho);
  ce.stop_window = get_int(j, "stop_window", ce.stop_window);
  ce.alpha = get_number(j, "alpha", ce.alpha);
  ce.max_iters = get_int(j, "max_iters", ce.max_iters);
  return ce;
}

RunSettings parse_settings(const json& j) {
  expect_keys(j,
              {"p", "cost_model", "prior", "family", "constraint", "mode",
               "fixed_point_rounds", "ce", "filter"},
              "");
  RunSettings r;
  r.scenario.p = get_int(j, "p", 5);
  if (r.scenario.p < 2) throw odce::ConfigError("p must be at least 2");
  const int n = r.scenario.p * r.scenario.p - r.scenario.p;

  if (j.contains("cost_model")) r.scenario.cost_model = parse_cost_model(j.at("cost_model"));
  if (j.contains("prior")) {
    expect_keys(j.at("prior"), {"rate"}, "prior.");
    r.scenario.prior_rate = get_number(j.at("prior"), "rate", 1.0);
  }
  if (j.contains("family")) {
    expect_keys(j.at("family"), {"kind", "bound"}, "family.");
    const std::string kind = get_string(j.at("family"), "kind", "exp");
    if (kind == "exp") r.scenario.family = odce::FamilyKind::kExp;
    else if (kind == "trunc_exp") r.scenario.family = odce::FamilyKind::kTruncExp;
    else throw odce::ConfigError("family.kind must be exp or trunc_exp");
    r.scenario.family_bound = get_number(j.at("family"), "bound", 50.0);
  }
  if (j.contains("constraint")) r.scenario.constraint = parse_constraint(j.at("constraint"), n);
  const std::string mode = get_string(j, "mode", "static");
  if (mode == "static") r.scenario.mode = odce::PerformanceMode::kStaticA;
  else if (mode == "coupled") r.scenario.mode = odce::PerformanceMode::kCoupled;
  else throw odce::ConfigError("mode must be static or coupled");
  r.scenario.fixed_point_rounds = get_int(j, "fixed_point_rounds", 3);
  if (j.contains("ce")) r.scenario.ce = parse_ce(j.at("ce"));

  if (j.contains("filter")) {
    const json& f = j.at("filter");
    expect_keys(f,
                {"particles", "steps", "sigma", "resample_threshold", "resample",
                 "weight_mode", "packet_scale", "capacity_factor", "beta", "xi_samples",
                 "xi_iters"},
                "filter.");
    const int particles = get_int(f, "particles", 100);
    if (particles < 1) throw odce::ConfigError("filter.particles must be positive");
    r.filter.cfg.n_particles = static_cast<std::size_t>(particles);
    r.filter.cfg.steps = get_int(f, "steps", 20);
    r.filter.cfg.sigma = get_number(f, "sigma", 0.0);
    r.filter.cfg.resample_threshold = get_number(f, "resample_threshold", 0.5);
    r.filter.cfg.resample_enabled = get_bool(f, "resample", true);
    const std::string wm = get_string(f, "weight_mode", "scalar");
    if (wm == "scalar") r.filter.cfg.weight_mode = odce::WeightMode::kScalar;
    else if (wm == "per_component") r.filter.cfg.weight_mode = odce::WeightMode::kPerComponent;
    else throw odce::ConfigError("filter.weight_mode must be scalar or per_component");
    const int xi_samples = get_int(f, "xi_samples", 0);
    if (xi_samples < 0) throw odce::ConfigError("filter.xi_samples must be nonnegative");
    r.filter.cfg.xi.n_samples = static_cast<std::size_t>(xi_samples);
    r.filter.cfg.xi.max_iters = get_int(f, "xi_iters", 30);
    r.filter.packet_scale = get_number(f, "packet_scale", 10.0);
    r.filter.capacity_factor = get_number(f, "capacity_factor", 4.0);
    r.filter.beta = get_number(f, "beta", 1.0);
    if (!(r.filter.packet_scale > 0.0)) throw odce::ConfigError("filter.packet_scale must be positive");
    if (!(r.filter.capacity_factor >= 1.0)) throw odce::ConfigError("filter.capacity_factor must be at least 1");
    if (!(r.filter.beta > 0.0)) throw odce::ConfigError("filter.beta must be positive");
  }
  return r;
}

json parse_override_value(const std::string& text) {
  const json parsed = json::parse(text, nullptr, false);
  if (!parsed.is_discarded()) return parsed;
  return json(text);
}

void apply_override(json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw odce::ConfigError("--set expects key.path=value, got '" + spec + "'");
  const std::string path = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw odce::ConfigError("--set has an empty path segment in '" + spec + "'");
    if (dot == std::string::npos) {
      (*node)[key] = parse_override_value(value);
      break;
    }
    node = &(*node)[key];
    if (!node->is_object() && !node->is_null())
      throw odce::ConfigError("--set path '" + path + "' descends into a non-object");
    start = dot + 1;
  }
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int workers = 1;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--seed", args.seed, "random seed");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--workers", args.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--set", args.overrides, "dotted config override, key.path=value");
}

RunSettings load_settings(const CommonArgs& args) {
  json doc = json::object();
  if (!args.config_path.empty()) doc = odce::io::read_json(args.config_path);
  for (const auto& spec : args.overrides) apply_override(doc, spec);
  RunSettings settings = parse_settings(doc);
  settings.scenario.ce.seed = args.seed;
  settings.scenario.ce.workers = args.workers;
  settings.filter.cfg.seed = args.seed;
  settings.filter.cfg.workers = args.workers;
  return settings;
}

// The manifest is the first artifact every command drops, so aborted runs
// still say what they were.
void write_manifest(const fs::path& out, const std::string& command, const CommonArgs& args) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw odce::IoError("cannot create output directory: " + out.string());
  json m;
  m["command"] = command;
  m["config"] = args.config_path.empty() ? "(defaults)" : args.config_path;
  m["seed"] = args.seed;
  m["out"] = out.string();
  m["workers"] = args.workers;
  m["overrides"] = args.overrides;
  m["timestamp"] = utc_timestamp();
  odce::io::write_json(out / "manifest.json", m);
}

int cmd_simulate(const CommonArgs& args) {
  const RunSettings settings = load_settings(args);
  const fs::path out(args.out_dir);
  write_manifest(out, "simulate", args);

  const odce::GroundTruth truth = odce::simulate(settings.scenario, args.seed);
  odce::io::write_arc_csv(out / "truth_x.csv", truth.net, truth.x0);
  odce::io::write_arc_csv(out / "truth_y.csv", truth.net, truth.y);
  odce::io::write_arc_csv(out / "truth_c.csv", truth.net, truth.c);
  const odce::PathTable table = odce::shortest_paths(truth.net, truth.c);
  odce::io::write_routing_json(out / "routing.json", truth.net, table, truth.a);
  std::cout << "simulated p=" << settings.scenario.p << " (" << truth.net.n
            << " arcs) into " << out.string() << "\n";
  return kExitOk;
}

int cmd_estimate(const CommonArgs& args) {
  const RunSettings settings = load_settings(args);
  const fs::path out(args.out_dir);
  write_manifest(out, "estimate", args);

  const auto t0 = std::chrono::steady_clock::now();
  const odce::GroundTruth truth = odce::simulate(settings.scenario, args.seed);

  odce::EstimateOptions opt;
  opt.family = settings.scenario.family;
  opt.family_bound = settings.scenario.family_bound;
  opt.initial_rate = settings.scenario.prior_rate;
  opt.constraint = settings.scenario.constraint;
  opt.mode = settings.scenario.mode;
  opt.cost_model = settings.scenario.cost_model;
  opt.ce = settings.scenario.ce;
  const odce::EstimationResult r = odce::estimate(truth, opt);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json res;
  res["x_hat"] = r.x_hat;
  res["y_hat"] = r.y_hat;
  res["residual"] = r.residual;
  res["score"] = r.score;
  res["iterations"] = r.iterations;
  res["stopped_by_threshold"] = r.stopped_by_threshold;
  res["refined"] = r.refined;
  res["warnings"] = r.warnings;
  res["wall_time_s"] = wall;
  odce::io::write_json(out / "result.json", res);
  odce::io::write_trace_csv(out / "trace.csv", r.trace);

  json ident;
  ident["used_arcs"] = r.diagnostics.used_arcs;
  ident["rank"] = r.diagnostics.rank;
  ident["nullity"] = r.diagnostics.nullity;
  ident["square"] = r.diagnostics.square;
  ident["identifiable"] = r.diagnostics.identifiable;
  odce::io::write_json(out / "identifiability.json", ident);

  double norm = 0.0;
  for (double v : truth.y) norm += v * v;
  norm = std::sqrt(norm);
  std::cout << "estimate finished: residual " << r.residual << " (relative "
            << (norm > 0.0 ? r.residual / norm : 0.0) << "), " << r.iterations
            << " iterations, nullity " << r.diagnostics.nullity << "\n";
  return kExitOk;
}

int cmd_filter(const CommonArgs& args) {
  const RunSettings settings = load_settings(args);
  const fs::path out(args.out_dir);
  write_manifest(out, "filter", args);

  const odce::GroundTruth truth = odce::simulate(settings.scenario, args.seed);
  const int n = truth.net.n;

  odce::DynamicsParams dyn;
  dyn.net = truth.net;
  dyn.beta = settings.filter.beta;
  dyn.cost_model = settings.scenario.cost_model;
  if (dyn.cost_model.kind == odce::CostKind::kConstantRandom) dyn.constant_costs = truth.c;

  // Arc lengths follow the truth costs, rescaled so the slowest arc keeps a
  // 20 percent per-step escape probability and none beats free flow.
  double cmax = 0.0;
  for (double c : truth.c) cmax = std::max(cmax, c);
  dyn.length.resize(n);
  for (int i = 0; i < n; ++i)
    dyn.length[i] = std::max(dyn.beta, truth.c[i] * 5.0 * dyn.beta / cmax);

  odce::TrafficState initial;
  initial.y.resize(n);
  std::int64_t peak = 0;
  for (int i = 0; i < n; ++i) {
    initial.y[i] = std::llround(settings.filter.packet_scale * truth.y[i]);
    peak = std::max(peak, initial.y[i]);
  }
  dyn.capacity.assign(n, std::max<std::int64_t>(
                             4, static_cast<std::int64_t>(std::ceil(
                                    settings.filter.capacity_factor *
                                    static_cast<double>(peak)))));
  if (dyn.cost_model.kind == odce::CostKind::kConstantRandom) {
    initial.c = truth.c;
  } else {
    odce::LoadVector loads(n );
    for (int i = 0; i < n; ++i) loads[i] = static_cast<double>(initial.y[i]);
    initial.c = dyn.cost_model.apply(loads);
  }

  const auto trajectory =
      odce::simulate_trajectory(initial, dyn, settings.filter.cfg.steps, args.seed);
  const odce::FilterOutput result =
      odce::filter_run(trajectory, initial, dyn, settings.filter.cfg);

  odce::io::write_filter_csv(out / "filter.csv", result.rows);
  odce::io::write_ess_csv(out / "ess.csv", result.ess_rows);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

  std::size_t resamples = 0;
  for (const auto& row : result.ess_rows) resamples += row.resampled ? 1 : 0;
  std::cout << "filtered " << settings.filter.cfg.steps << " steps with "
            << settings.filter.cfg.n_particles << " particles ("
            << resamples << " resampling events)\n";
  return kExitOk;
}

int cmd_report(const CommonArgs& args) {
  const fs::path out(args.out_dir);
  if (!fs::exists(out)) throw odce::IoError("no such directory: " + out.string());
  bool anything = false;

  if (fs::exists(out / "manifest.json")) {
    const json m = odce::io::read_json(out / "manifest.json");
    std::cout << "run: " << m.value("command", "?") << " seed " << m.value("seed", 0)
              << " at " << m.value("timestamp", "?") << "\n";
    anything = true;
  }
  if (fs::exists(out / "result.json")) {
    const json r = odce::io::read_json(out / "result.json");
    std::cout << "estimate: residual " << r.value("residual", 0.0) << ", score "
              << r.value("score", 0.0) << ", iterations " << r.value("iterations", 0)
              << (r.value("refined", false) ? " (refined)" : "") << ", wall "
              << r.value("wall_time_s", 0.0) << "s\n";
    anything = true;
  }
  if (fs::exists(out / "identifiability.json")) {
    const json id = odce::io::read_json(out / "identifiability.json");
    std::cout << "system: " << id.value("used_arcs", 0) << " used arcs, rank "
              << id.value("rank", 0) << ", nullity " << id.value("nullity", 0)
              << (id.value("identifiable", false) ? " (identifiable)" : " (underdetermined)")
              << "\n";
    anything = true;
  }
  if (fs::exists(out / "ess.csv")) {
    std::ifstream f(out / "ess.csv");
    std::string line;
    std::getline(f, line);
    int steps = 0, resamples = 0;
    double last_ess = 0.0;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      ++steps;
      const auto c1 = line.find(',');
      const auto c2 = line.find(',', c1 + 1);
      last_ess = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
      if (line.substr(c2 + 1) == "true") ++resamples;
    }
    std::cout << "filter: " << steps << " steps, " << resamples
              << " resampling events, final ess " << last_ess << "\n";
    anything = true;
  }
  if (!anything) throw odce::IoError("nothing to report in " + out.string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"origin-destination demand estimation on complete networks"};
  app.require_subcommand(1);

  CommonArgs sim_args, est_args, fil_args, rep_args;
  CLI::App* sim = app.add_subcommand("simulate", "draw demands and write ground truth");
  add_common(sim, sim_args);
  CLI::App* est = app.add_subcommand("estimate", "recover demands from arc loads");
  add_common(est, est_args);
  CLI::App* fil = app.add_subcommand("filter", "track rolling traffic with a particle filter");
  add_common(fil, fil_args);
  CLI::App* rep = app.add_subcommand("report", "summarize an output directory");
  add_common(rep, rep_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_args);
    if (est->parsed()) return cmd_estimate(est_args);
    if (fil->parsed()) return cmd_filter(fil_args);
    if (rep->parsed()) return cmd_report(rep_args);
    std::cerr << "error: no command given\n";
    return kExitUsage;
  } catch (const odce::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const odce::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const odce::DegeneracyError& e) {
    std::cerr << "numerical degeneracy: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
