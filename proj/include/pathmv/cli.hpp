#pragma once

// Batch command-line front end. Four subcommands (cluster, simulate, solve,
// backtest) share one flat key=value configuration model with precedence
// defaults < config file < command-line flags. A config file is either
// key=value lines ('#' starts a comment) or a manifest.json from a previous
// run. Every successful run writes a manifest.json beside its outputs with
// the fully resolved config, the derived RNG stream seeds, and the tool
// version, so `--config <out>/manifest.json` reproduces it byte-for-byte.
//
// Exit codes: 0 success (including --help), 1 runtime failure, 2
// configuration/usage error.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pathmv/backtest.hpp"
#include "pathmv/clustering.hpp"
#include "pathmv/hjb.hpp"
#include "pathmv/io.hpp"
#include "pathmv/market.hpp"
#include "pathmv/market_data.hpp"
#include "pathmv/nn_io.hpp"
#include "pathmv/path_grid.hpp"
#include "pathmv/policy.hpp"
#include "pathmv/rng.hpp"
#include "pathmv/similarity.hpp"

namespace pathmv::cli {

inline constexpr const char* kToolName = "pathmv";
inline constexpr const char* kToolVersion = "0.1.0";

// Configuration mistakes (unknown key, unparsable value, malformed file).
// These exit with status 2; runtime failures exit with 1.
struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One config key. Its command-line flag is --<name>; its config-file key is
// <name>. type: 'i' integer, 'u' unsigned 64-bit, 'd' double, 'b' bool
// (true/false/1/0), 's' string.
struct KeySpec {
  std::string name;
  char type = 's';
  std::string def;
  std::string help;
};

using KeyValues = std::map<std::string, std::string>;

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"cluster", "simulate", "solve", "backtest"};
  return names;
}

inline std::string description_of(const std::string& command) {
  if (command == "cluster") return "group assets by return similarity via simulated annealing";
  if (command == "simulate") return "draw geometric Brownian price paths";
  if (command == "solve") return "train the path-dependent value network and report policy diagnostics";
  if (command == "backtest") return "run the rolling daily trading protocol and emit reports";
  return "";
}

namespace detail {

// Solver keys shared by the `solve` and `backtest` schemas.
inline void append_solver_keys(std::vector<KeySpec>& keys) {
  keys.push_back({"gamma", 'd', "0.01", "exploration temperature"});
  keys.push_back({"z", 'd', "1.05", "target expected terminal wealth"});
  keys.push_back({"paths", 'i', "200", "training paths per round"});
  keys.push_back({"rounds", 'i', "10", "path-regeneration rounds"});
  keys.push_back({"epochs", 'i', "100", "optimizer sweeps per round"});
  keys.push_back({"lr", 'd', "0.001", "optimizer step size"});
  keys.push_back({"hidden", 'i', "32", "recurrent state size"});
  keys.push_back({"widths", 's', "64,64,64", "head layer widths, comma-separated"});
  keys.push_back({"h", 'd', "0.01", "stencil bump in wealth units"});
  keys.push_back({"eps", 'd', "0.000001", "curvature floor in the policy denominator"});
  keys.push_back({"terminal-weight", 'd', "1", "weight on the terminal condition"});
  keys.push_back({"w0", 'd', "1", "initial constraint multiplier"});
  keys.push_back({"w-step", 'd', "0.05", "multiplier update step"});
  keys.push_back({"w-halfwidth", 'd', "5", "multiplier bracket half-width around the target"});
}

}  // namespace detail

inline const std::vector<KeySpec>& schema(const std::string& command) {
  static const std::map<std::string, std::vector<KeySpec>> all = [] {
    std::map<std::string, std::vector<KeySpec>> m;

    m["cluster"] = {
        {"prices", 's', "", "prices CSV: date column then one column per asset"},
        {"w", 'd', "0.5", "similarity weight on cumulative growth vs rank correlation"},
        {"kappa", 'd', "0.0001", "cluster-count pressure in the annealing energy"},
        {"t0", 'd', "100", "initial annealing temperature"},
        {"tf", 'd', "0.1", "final annealing temperature"},
        {"alpha", 'd', "0.99", "geometric cooling factor per step"},
        {"k-max", 'i', "25", "maximum number of clusters"},
        {"restarts", 'i', "100", "independent annealing restarts"},
        {"seed", 'u', "0", "master RNG seed"},
        {"out", 's', "out/cluster", "output directory"},
    };

    m["simulate"] = {
        {"assets", 'i', "1", "number of identical independent assets"},
        {"mu", 'd', "0.1", "annual drift per asset"},
        {"vol", 'd', "0.2", "annual volatility per asset"},
        {"r", 'd', "0", "risk-free rate"},
        {"horizon", 'd', "1", "horizon in years"},
        {"steps", 'i', "20", "time steps over the horizon"},
        {"paths", 'i', "100", "number of simulated paths"},
        {"seed", 'u', "0", "master RNG seed"},
        {"out", 's', "out/simulate", "output directory"},
    };

    m["solve"] = {
        {"assets", 'i', "1", "number of identical independent assets"},
        {"mu", 'd', "0.1", "annual drift per asset"},
        {"vol", 'd', "0.2", "annual volatility per asset"},
        {"r", 'd', "0", "risk-free rate"},
        {"horizon", 'd', "1", "horizon in years"},
        {"steps", 'i', "20", "grid intervals over the horizon"},
        {"x0", 's', "1", "initial wealth path values, comma-separated"},
        {"check-paths", 'i', "0", "Monte Carlo paths for the value-martingale check (0 = skip)"},
        {"seed", 'u', "0", "master RNG seed"},
        {"out", 's', "out/solve", "output directory"},
    };
    detail::append_solver_keys(m["solve"]);

    m["backtest"] = {
        {"prices", 's', "", "prices CSV: date column then one column per asset"},
        {"benchmark-col", 's', "INDEX", "benchmark column, held out of the tradable universe"},
        {"start-day", 'i', "75", "row index of the first trading day"},
        {"days", 'i', "30", "consecutive trading days"},
        {"window", 'i', "75", "trailing estimation window in daily returns"},
        {"r", 'd', "0", "risk-free rate"},
        {"ridge", 'd', "-1", "covariance diagonal loading (< 0 = automatic)"},
        {"warm-start", 'b', "false", "start each day from the previous day's parameters"},
        {"zero-holdings", 'b', "false", "skip training and hold nothing (control runs)"},
        {"seed", 'u', "0", "master RNG seed"},
        {"out", 's', "out/backtest", "output directory"},
    };
    detail::append_solver_keys(m["backtest"]);
    // The per-day solver grid (N, T) is owned by the protocol, so backtest
    // exposes no steps/horizon keys; paths defaults higher there.
    for (auto& k : m["backtest"])
      if (k.name == "paths") k.def = "500";

    return m;
  }();
  const auto it = all.find(command);
  if (it == all.end()) throw std::logic_error("schema: unknown command " + command);
  return it->second;
}

// ------------------------------------------------------------ value parsing

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline const KeySpec* find_key(const std::vector<KeySpec>& keys, std::string_view name) {
  for (const auto& k : keys)
    if (k.name == name) return &k;
  return nullptr;
}

template <typename T>
inline bool parse_full(const std::string& s, T& v) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  return ec == std::errc() && p == e;
}

inline bool parse_bool(const std::string& s, bool& v) {
  if (s == "true" || s == "1") return v = true, true;
  if (s == "false" || s == "0") return v = false, true;
  return false;
}

inline std::string type_name(char type) {
  switch (type) {
    case 'd': return "a number";
    case 'i': return "an integer";
    case 'u': return "an unsigned integer";
    case 'b': return "true or false";
    default: return "a string";
  }
}

inline std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::string field;
  std::istringstream ss(s);
  while (std::getline(ss, field, ',')) parts.push_back(trim(field));
  return parts;
}

}  // namespace detail

inline void validate_value(const std::string& command, const KeySpec& k, const std::string& v) {
  bool ok = true;
  switch (k.type) {
    case 'd': { double x; ok = detail::parse_full(v, x); break; }
    case 'i': { long long x; ok = detail::parse_full(v, x); break; }
    case 'u': { std::uint64_t x; ok = detail::parse_full(v, x); break; }
    case 'b': { bool x; ok = detail::parse_bool(v, x); break; }
    default: break;
  }
  if (!ok)
    throw CliError(command + ": key '" + k.name + "' expects " + detail::type_name(k.type) +
                   ", got '" + v + "'");
}

inline double get_d(const KeyValues& v, const std::string& key) {
  double x;
  if (!detail::parse_full(v.at(key), x))
    throw CliError("key '" + key + "' expects a number, got '" + v.at(key) + "'");
  return x;
}

inline long long get_i(const KeyValues& v, const std::string& key) {
  long long x;
  if (!detail::parse_full(v.at(key), x))
    throw CliError("key '" + key + "' expects an integer, got '" + v.at(key) + "'");
  return x;
}

inline int get_int(const KeyValues& v, const std::string& key) {
  const long long x = get_i(v, key);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw CliError("key '" + key + "' is out of range: " + v.at(key));
  return static_cast<int>(x);
}

inline std::uint64_t get_u(const KeyValues& v, const std::string& key) {
  std::uint64_t x;
  if (!detail::parse_full(v.at(key), x))
    throw CliError("key '" + key + "' expects an unsigned integer, got '" + v.at(key) + "'");
  return x;
}

inline bool get_b(const KeyValues& v, const std::string& key) {
  bool x;
  if (!detail::parse_bool(v.at(key), x))
    throw CliError("key '" + key + "' expects true or false, got '" + v.at(key) + "'");
  return x;
}

inline const std::string& get_s(const KeyValues& v, const std::string& key) { return v.at(key); }

inline std::vector<int> get_int_list(const KeyValues& v, const std::string& key) {
  std::vector<int> out;
  for (const auto& part : detail::split_commas(v.at(key))) {
    int x;
    if (!detail::parse_full(part, x))
      throw CliError("key '" + key + "' expects comma-separated integers, got '" + v.at(key) + "'");
    out.push_back(x);
  }
  if (out.empty())
    throw CliError("key '" + key + "' expects at least one integer, got '" + v.at(key) + "'");
  return out;
}

inline std::vector<double> get_double_list(const KeyValues& v, const std::string& key) {
  std::vector<double> out;
  for (const auto& part : detail::split_commas(v.at(key))) {
    double x;
    if (!detail::parse_full(part, x))
      throw CliError("key '" + key + "' expects comma-separated numbers, got '" + v.at(key) + "'");
    out.push_back(x);
  }
  if (out.empty())
    throw CliError("key '" + key + "' expects at least one number, got '" + v.at(key) + "'");
  return out;
}

// ------------------------------------------------------------ config files

// A config file is a manifest.json (first non-space byte '{') or key=value
// lines. Unknown keys are rejected by name so typos cannot silently fall
// back to defaults.
inline KeyValues parse_config_file(const std::string& path, const std::string& command,
                                   const std::vector<KeySpec>& keys) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw CliError(e.what());
  }
  KeyValues out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw CliError(path + ": not valid JSON");
    if (!j.is_object() || !j.contains("command") || !j.at("command").is_string())
      throw CliError(path + ": a manifest must be a JSON object with a \"command\" string");
    const auto cmd = j.at("command").get<std::string>();
    if (cmd != command)
      throw CliError(path + ": manifest is for command '" + cmd + "', not '" + command + "'");
    if (!j.contains("config") || !j.at("config").is_object())
      throw CliError(path + ": manifest has no \"config\" object");
    for (const auto& [key, val] : j.at("config").items()) {
      if (!detail::find_key(keys, key))
        throw CliError(path + ": unknown config key '" + key + "' for command '" + command + "'");
      if (val.is_string())
        out[key] = val.get<std::string>();
      else if (val.is_boolean())
        out[key] = val.get<bool>() ? "true" : "false";
      else if (val.is_number_unsigned())
        out[key] = std::to_string(val.get<std::uint64_t>());
      else if (val.is_number_integer())
        out[key] = std::to_string(val.get<std::int64_t>());
      else if (val.is_number_float())
        out[key] = format_double(val.get<double>());
      else
        throw CliError(path + ": config key '" + key + "' has an unsupported JSON type");
    }
    return out;
  }

  std::istringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw CliError(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string val = detail::trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw CliError(path + ":" + std::to_string(lineno) + ": empty key");
    if (!detail::find_key(keys, key))
      throw CliError(path + ": unknown config key '" + key + "' for command '" + command + "'");
    out[key] = val;
  }
  return out;
}

// ------------------------------------------------------------ manifest

inline nlohmann::json typed_config(const std::vector<KeySpec>& keys, const KeyValues& v) {
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& k : keys) {
    switch (k.type) {
      case 'd': cfg[k.name] = get_d(v, k.name); break;
      case 'i': cfg[k.name] = get_i(v, k.name); break;
      case 'u': cfg[k.name] = get_u(v, k.name); break;
      case 'b': cfg[k.name] = get_b(v, k.name); break;
      default: cfg[k.name] = v.at(k.name); break;
    }
  }
  return cfg;
}

inline void write_manifest(const std::string& command, const std::vector<KeySpec>& keys,
                           const KeyValues& v,
                           const std::vector<std::pair<std::string, std::uint64_t>>& seeds,
                           const std::filesystem::path& out_dir) {
  nlohmann::json m;
  m["command"] = command;
  m["config"] = typed_config(keys, v);
  nlohmann::json s = nlohmann::json::object();
  for (const auto& [name, value] : seeds) s[name] = value;
  m["seeds"] = s;
  m["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  write_file((out_dir / "manifest.json").string(), m.dump(2) + "\n");
}

// ------------------------------------------------------------ handlers

namespace detail {

inline SolverConfig solver_from_keys(const KeyValues& v, double horizon, int steps) {
  SolverConfig cfg;
  cfg.gamma = get_d(v, "gamma");
  cfg.z = get_d(v, "z");
  cfg.lagrange_w = get_d(v, "w0");
  cfg.M = get_int(v, "paths");
  if (steps > 0) cfg.N = steps;
  if (horizon > 0) cfg.T = horizon;
  cfg.h = get_d(v, "h");
  cfg.terminal_weight = get_d(v, "terminal-weight");
  cfg.eps = get_d(v, "eps");
  cfg.outer_rounds = get_int(v, "rounds");
  cfg.epochs = get_int(v, "epochs");
  cfg.w_step = get_d(v, "w-step");
  cfg.w_halfwidth = get_d(v, "w-halfwidth");
  cfg.adam.lr = get_d(v, "lr");
  cfg.net.hidden = get_int(v, "hidden");
  cfg.net.widths = get_int_list(v, "widths");
  return cfg;
}

inline ModelParams identical_assets(const KeyValues& v) {
  const int d = get_int(v, "assets");
  if (d < 1) throw CliError("key 'assets' must be >= 1");
  const double vol = get_d(v, "vol");
  return make_params(Eigen::VectorXd::Constant(d, get_d(v, "mu")),
                     Eigen::MatrixXd::Identity(d, d) * (vol * vol), get_d(v, "r"));
}

}  // namespace detail

inline void cmd_cluster(const KeyValues& v, std::ostream& err) {
  const std::string prices_path = get_s(v, "prices");
  if (prices_path.empty()) throw CliError("cluster: 'prices' is required (path to a prices CSV)");
  const std::uint64_t master = get_u(v, "seed");
  const std::filesystem::path out_dir = get_s(v, "out");

  const LoadResult loaded = load_prices(prices_path);
  for (const auto& note : loaded.exclusions) err << "cluster: excluded " << note << '\n';
  const PricePanel& panel = loaded.panel;
  const SimilarityConfig scfg{get_d(v, "w")};
  const SimilarityMatrix S = similarity_matrix(to_returns(panel), scfg, panel.tickers);

  AnnealConfig acfg;
  acfg.T0 = get_d(v, "t0");
  acfg.Tf = get_d(v, "tf");
  acfg.alpha = get_d(v, "alpha");
  acfg.kappa = get_d(v, "kappa");
  acfg.k_max = get_int(v, "k-max");
  acfg.restarts = get_int(v, "restarts");
  acfg.seed = derive_seed(master, "cluster");
  err << "cluster: annealing " << panel.assets() << " assets, " << acfg.restarts
      << " restarts\n";
  const AnnealResult res = best_of_restarts(S.values, acfg);

  Rng rep_rng(derive_seed(master, "representatives"));
  const std::vector<int> reps = select_representatives(res.best, rep_rng);
  const auto groups = res.best.groups();

  ensure_dir(out_dir.string());
  {
    std::ofstream f(out_dir / "similarity.csv", std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + (out_dir / "similarity.csv").string());
    write_csv(S, f);
  }

  std::vector<int> cluster_of(static_cast<std::size_t>(panel.assets()), -1);
  std::vector<char> is_rep(static_cast<std::size_t>(panel.assets()), 0);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (const int a : groups[g]) cluster_of[static_cast<std::size_t>(a)] = static_cast<int>(g);
  for (const int a : reps) is_rep[static_cast<std::size_t>(a)] = 1;
  std::string csv = "ticker,cluster,representative\n";
  for (std::size_t i = 0; i < panel.tickers.size(); ++i)
    csv += panel.tickers[i] + ',' + std::to_string(cluster_of[i]) + ',' +
           (is_rep[i] ? "1\n" : "0\n");
  write_file((out_dir / "clusters.csv").string(), csv);

  nlohmann::json sum;
  sum["assets"] = panel.assets();
  sum["clusters"] = groups.size();
  sum["energy"] = res.best_energy;
  sum["steps_per_restart"] = res.steps;
  sum["best_restart"] = res.restart_index;
  sum["restart_energies"] = res.restart_energies;
  nlohmann::json reps_json = nlohmann::json::array();
  for (const int a : reps) reps_json.push_back(panel.tickers[static_cast<std::size_t>(a)]);
  sum["representatives"] = reps_json;
  sum["excluded"] = loaded.exclusions;
  write_file((out_dir / "summary.json").string(), sum.dump(2) + "\n");

  err << "cluster: " << groups.size() << " clusters, energy "
      << format_double(res.best_energy) << '\n';
}

inline void cmd_simulate(const KeyValues& v, std::ostream& err) {
  const ModelParams params = detail::identical_assets(v);
  const int d = static_cast<int>(params.d());
  SimConfig sim;
  sim.N = get_int(v, "steps");
  sim.T = get_d(v, "horizon");
  sim.M = get_int(v, "paths");
  sim.seed = derive_seed(get_u(v, "seed"), "simulate");
  const auto paths = simulate_assets(params, sim);

  const std::filesystem::path out_dir = get_s(v, "out");
  ensure_dir(out_dir.string());
  std::string csv = "path,step,time";
  for (int a = 0; a < d; ++a) csv += ",A" + std::to_string(a);
  csv += '\n';
  for (int j = 0; j < sim.M; ++j)
    for (int k = 0; k <= sim.N; ++k) {
      csv += std::to_string(j) + ',' + std::to_string(k) + ',' + format_double(sim.dt() * k);
      for (int a = 0; a < d; ++a) csv += ',' + format_double(paths[static_cast<std::size_t>(j)](k, a));
      csv += '\n';
    }
  write_file((out_dir / "paths.csv").string(), csv);
  err << "simulate: wrote " << sim.M << " paths x " << (sim.N + 1) << " points x " << d
      << " assets\n";
}

inline void cmd_solve(const KeyValues& v, std::ostream& err) {
  const double horizon = get_d(v, "horizon");
  const int steps = get_int(v, "steps");
  const std::uint64_t master = get_u(v, "seed");
  const ModelParams params = detail::identical_assets(v);
  const SolverConfig cfg = detail::solver_from_keys(v, horizon, steps);

  const std::vector<double> x0v = get_double_list(v, "x0");
  if (steps < 1) throw CliError("solve: 'steps' must be >= 1");
  if (x0v.size() > static_cast<std::size_t>(steps))
    throw CliError("solve: 'x0' has " + std::to_string(x0v.size()) +
                   " points but only " + std::to_string(steps) +
                   " grid steps; at least one step must remain to the horizon");
  const PathGrid x0(x0v, horizon / steps);

  err << "solve: training " << cfg.outer_rounds << " rounds x " << cfg.epochs << " epochs, "
      << cfg.M << " paths\n";
  const TrainResult tr = train(x0, params, cfg, derive_seed(master, "solve"));

  const std::filesystem::path out_dir = get_s(v, "out");
  ensure_dir(out_dir.string());
  save_network(tr.net, (out_dir / "network.bin").string());

  std::string csv = "epoch,loss\n";
  for (std::size_t i = 0; i < tr.loss_curve.size(); ++i)
    csv += std::to_string(i) + ',' + format_double(tr.loss_curve[i]) + '\n';
  write_file((out_dir / "training.csv").string(), csv);

  nlohmann::json s;
  s["final_w"] = tr.final_w;
  s["final_mean_xT"] = tr.final_mean_xT;
  s["initial_loss"] = tr.loss_curve.front();
  s["final_loss"] = tr.loss_curve.back();
  s["w_trace"] = tr.w_trace;
  s["mean_xT_trace"] = tr.mean_xT_trace;
  s["residual_evals"] = tr.total.evals;
  s["floored_fraction"] =
      tr.total.evals > 0 ? static_cast<double>(tr.total.floored) / static_cast<double>(tr.total.evals)
                         : 0.0;
  s["last_epoch_floored_fraction"] =
      tr.last_epoch.evals > 0
          ? static_cast<double>(tr.last_epoch.floored) / static_cast<double>(tr.last_epoch.evals)
          : 0.0;
  const GaussianPolicy tip = policy_from_network(x0, tr.net, params, cfg);
  nlohmann::json mean = nlohmann::json::array();
  for (Eigen::Index i = 0; i < tip.mean.size(); ++i) mean.push_back(tip.mean(i));
  s["tip_policy_mean"] = mean;

  const long long check_paths = get_i(v, "check-paths");
  if (check_paths > 0) {
    SimConfig sim;
    sim.N = steps;
    sim.T = horizon;
    sim.M = static_cast<int>(check_paths);
    sim.seed = derive_seed(master, "solve-check");
    const ValueFn value_fn = [&tr](const PathGrid& p) { return value(p, tr.net); };
    const PolicyFn policy_fn = [&tr, &params, &cfg](const PathGrid& p) {
      return policy_from_network(p, tr.net, params, cfg);
    };
    const MartingaleReport rep = martingale_check(value_fn, policy_fn, params, x0, sim, cfg.gamma);
    s["martingale"] = {{"taus", rep.taus},
                       {"gaps", rep.gaps},
                       {"stderrs", rep.stderrs},
                       {"worst_gap", rep.worst_gap},
                       {"worst_stderr", rep.worst_stderr}};
  }
  write_file((out_dir / "solve.json").string(), s.dump(2) + "\n");

  err << "solve: loss " << format_double(tr.loss_curve.front()) << " -> "
      << format_double(tr.loss_curve.back()) << ", w " << format_double(tr.final_w)
      << ", mean terminal wealth " << format_double(tr.final_mean_xT) << '\n';
}

inline void cmd_backtest(const KeyValues& v, std::ostream& err) {
  const std::string prices_path = get_s(v, "prices");
  if (prices_path.empty()) throw CliError("backtest: 'prices' is required (path to a prices CSV)");
  const std::uint64_t master = get_u(v, "seed");
  const LoadResult loaded = load_prices(prices_path);
  for (const auto& note : loaded.exclusions) err << "backtest: excluded " << note << '\n';
  const PricePanel& panel = loaded.panel;

  BacktestConfig cfg;
  cfg.r = get_d(v, "r");
  cfg.window = get_i(v, "window");
  cfg.days = get_int(v, "days");
  cfg.ridge = get_d(v, "ridge");
  cfg.seed = derive_seed(master, "backtest");
  cfg.zero_holdings = get_b(v, "zero-holdings");
  cfg.warm_start = get_b(v, "warm-start");
  cfg.solver = detail::solver_from_keys(v, -1.0, -1);  // grid (N, T) is set per protocol run
  const std::string bench = get_s(v, "benchmark-col");
  const auto start_row = static_cast<Eigen::Index>(get_i(v, "start-day"));

  err << "backtest: " << cfg.days << " days from row " << start_row << ", benchmark " << bench
      << '\n';
  const BacktestResult res = run_backtest(panel, bench, start_row, cfg);

  const Eigen::Index bcol = panel.column(bench);
  std::vector<std::string> tickers;
  for (Eigen::Index j = 0; j < panel.assets(); ++j)
    if (j != bcol) tickers.push_back(panel.tickers[static_cast<std::size_t>(j)]);
  const std::vector<std::string> dates(panel.dates.begin() + start_row,
                                       panel.dates.begin() + start_row + cfg.days);
  report(res.ledger, res.benchmark, tickers, dates, get_s(v, "out"));

  err << "backtest: final wealth " << format_double(res.ledger.wealth.tip()) << ", benchmark "
      << format_double(res.benchmark.values.back()) << '\n';
}

// ------------------------------------------------------------ driver

inline std::string usage_text() {
  std::string s;
  s += std::string(kToolName) + " " + kToolVersion +
       " - asset clustering and exploratory mean-variance control\n\n";
  s += "usage: pathmv <command> [--config FILE] [--<key> <value> ...]\n\ncommands:\n";
  for (const auto& c : command_names()) {
    s += "  " + c + std::string(c.size() < 9 ? 9 - c.size() : 1, ' ') + description_of(c) + '\n';
  }
  s += "\nrun 'pathmv <command> --help' for that command's keys.\n";
  return s;
}

inline int dispatch(const std::string& command, const KeyValues& values, std::ostream& err) {
  try {
    const std::uint64_t master = get_u(values, "seed");
    std::vector<std::pair<std::string, std::uint64_t>> seeds{{"master", master}};
    if (command == "cluster") {
      seeds.emplace_back("cluster", derive_seed(master, "cluster"));
      seeds.emplace_back("representatives", derive_seed(master, "representatives"));
      cmd_cluster(values, err);
    } else if (command == "simulate") {
      seeds.emplace_back("simulate", derive_seed(master, "simulate"));
      cmd_simulate(values, err);
    } else if (command == "solve") {
      seeds.emplace_back("solve", derive_seed(master, "solve"));
      seeds.emplace_back("solve-check", derive_seed(master, "solve-check"));
      cmd_solve(values, err);
    } else {
      seeds.emplace_back("backtest", derive_seed(master, "backtest"));
      cmd_backtest(values, err);
    }
    write_manifest(command, schema(command), values, seeds, get_s(values, "out"));
    return 0;
  } catch (const CliError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

// Testable entry point: args excludes the program name; help goes to `out`,
// progress and errors to `err`.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    err << "error: no command given\n\n" << usage_text();
    return 2;
  }
  const std::string& command = args[0];
  if (command == "help" || command == "--help" || command == "-h") {
    out << usage_text();
    return 0;
  }
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), command) == names.end()) {
    err << "error: unknown command '" << command << "'\n\n" << usage_text();
    return 2;
  }
  const std::vector<KeySpec>& keys = schema(command);

  CLI::App app{description_of(command), std::string(kToolName) + " " + command};
  // Long-form help only: the stencil bump key 'h' owns the short spelling.
  app.set_help_flag("--help", "print this help message and exit");
  std::string config_path;
  app.add_option("--config", config_path,
                 "config file: key=value lines or a manifest.json from a previous run");
  std::map<std::string, std::string> flag_store;
  for (const auto& k : keys) flag_store[k.name] = {};
  std::vector<CLI::Option*> opts;
  opts.reserve(keys.size());
  for (const auto& k : keys)
    opts.push_back(app.add_option(
        "--" + k.name, flag_store[k.name],
        k.def.empty() ? k.help : k.help + " [default: " + k.def + "]"));

  try {
    std::vector<const char*> argv;
    argv.push_back(kToolName);
    for (std::size_t i = 1; i < args.size(); ++i) argv.push_back(args[i].c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    KeyValues values;
    for (const auto& k : keys) values[k.name] = k.def;
    if (!config_path.empty())
      for (const auto& [key, val] : parse_config_file(config_path, command, keys))
        values[key] = val;
    for (std::size_t i = 0; i < keys.size(); ++i)
      if (opts[i]->count() > 0) values[keys[i].name] = flag_store[keys[i].name];
    for (const auto& k : keys) validate_value(command, k, values.at(k.name));
    return dispatch(command, values, err);
  } catch (const CliError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace pathmv::cli
