#pragma once

// Rolling daily trading protocol: estimate market parameters from a trailing
// window, train a fresh value network on the current wealth path, form the
// closed-form Gaussian policy at the path tip, sample dollar holdings, and
// apply the realized next-day returns. Plus report emission (CSV/JSON/SVG),
// all byte-deterministic for fixed data, config, and seeds.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pathmv/hjb.hpp"
#include "pathmv/io.hpp"
#include "pathmv/market.hpp"
#include "pathmv/market_data.hpp"
#include "pathmv/nn.hpp"
#include "pathmv/path_grid.hpp"
#include "pathmv/policy.hpp"
#include "pathmv/rng.hpp"

namespace pathmv {

inline constexpr double kTradingDt = 1.0 / 252.0;

// ------------------------------------------------------------ formatting
// format_double (shortest round-trip decimal form, the byte-determinism
// workhorse) comes from io.hpp.

inline std::string format_fixed(double v, int precision) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
  return std::string(buf, res.ptr);
}

// ------------------------------------------------------------ configuration

struct BacktestConfig {
  double r = 0.0;             // risk-free rate
  Eigen::Index window = 75;   // trailing estimation window, daily returns
  int days = 30;              // consecutive trading days
  double ridge = -1.0;        // covariance diagonal loading; < 0 means automatic
  std::uint64_t seed = 0;     // master seed; per-day streams are derived
  bool zero_holdings = false; // debug: hold nothing, skip training
  bool warm_start = false;    // reuse the previous day's parameters as init
  SolverConfig solver;        // gamma, z, M, epochs, rounds, net, ... (N and T
                              // are owned by the backtest grid and overridden)
  BacktestConfig() { solver.M = 500; }
};

inline void validate_backtest_config(const BacktestConfig& cfg) {
  if (cfg.days < 1) throw std::invalid_argument("BacktestConfig: days must be >= 1");
  if (cfg.window < 2) throw std::invalid_argument("BacktestConfig: window must be >= 2");
}

// ------------------------------------------------------------ ledger types

struct DayRecord {
  Eigen::VectorXd holdings;  // sampled dollar positions per asset
  GaussianPolicy policy;     // the day's policy snapshot
  Eigen::VectorXd realized;  // next-day simple returns actually applied
  Eigen::VectorXd theta;     // trained parameters (empty when training skipped)
  double wealth_change = 0.0;
  double train_loss = 0.0;   // final training loss (0 when training skipped)
  double train_w = 0.0;      // final multiplier (0 when training skipped)
};

struct WealthLedger {
  PathGrid wealth{{1.0, 1.01}, kTradingDt};  // seeded two-point history
  std::vector<DayRecord> days;
};

struct BenchmarkSeries {
  std::string ticker;
  std::vector<double> values;  // normalized to 1 at the trading start
};

struct BacktestResult {
  WealthLedger ledger;
  BenchmarkSeries benchmark;
};

// Panel with one column removed (used to exclude the benchmark from the
// tradable universe).
inline PricePanel drop_column(const PricePanel& panel, Eigen::Index col) {
  if (col < 0 || col >= panel.assets())
    throw std::invalid_argument("drop_column: column out of range");
  PricePanel out;
  out.dates = panel.dates;
  out.prices.resize(panel.days(), panel.assets() - 1);
  for (Eigen::Index j = 0, jj = 0; j < panel.assets(); ++j) {
    if (j == col) continue;
    out.tickers.push_back(panel.tickers[static_cast<std::size_t>(j)]);
    out.prices.col(jj++) = panel.prices.col(j);
  }
  return out;
}

// ------------------------------------------------------------ one trading day

// Trades at price row `trade_row` (day index `k` within the run): estimate
// from the trailing window, train on the current wealth path, sample holdings
// from the tip policy, then apply the realized `trade_row -> trade_row + 1`
// simple returns. Self-financing: cash not in risky positions earns r.
inline void run_day(WealthLedger& ledger, const PricePanel& panel, Eigen::Index trade_row,
                    const BacktestConfig& cfg, int k) {
  if (trade_row + 1 >= panel.days())
    throw std::invalid_argument("run_day: no realized next-day return at row " +
                                std::to_string(trade_row));
  const Eigen::Index d = panel.assets();
  const double x = ledger.wealth.tip();
  DayRecord rec;

  try {
    const ModelParams params =
        estimate_params(panel, trade_row, cfg.window, cfg.r, cfg.ridge);
    if (cfg.zero_holdings) {
      rec.holdings = Eigen::VectorXd::Zero(d);
      rec.policy = bootstrap_policy(params, cfg.solver);
    } else {
      Network warm_net(cfg.solver.net);
      const Network* warm = nullptr;
      if (cfg.warm_start && !ledger.days.empty()) {
        if (ledger.days.back().theta.size() != warm_net.param_count())
          throw std::runtime_error("warm start: stored parameters do not match the network");
        warm_net.theta = ledger.days.back().theta;
        warm = &warm_net;
      }
      const TrainResult trained =
          train(ledger.wealth, params, cfg.solver,
                derive_seed(cfg.seed, "train", static_cast<std::uint64_t>(k)), warm);
      rec.train_loss = trained.loss_curve.back();
      rec.train_w = trained.final_w;
      rec.theta = trained.net.theta;
      rec.policy = policy_from_network(ledger.wealth, trained.net, params, cfg.solver);
      Rng rng(derive_seed(cfg.seed, "holdings", static_cast<std::uint64_t>(k)));
      rec.holdings = sample(rec.policy, rng);
    }
  } catch (const std::exception& e) {
    throw std::runtime_error("backtest day " + std::to_string(k) + " (row " +
                             std::to_string(trade_row) + ", " +
                             panel.dates[static_cast<std::size_t>(trade_row)] +
                             "): " + e.what());
  }

  rec.realized.resize(d);
  for (Eigen::Index j = 0; j < d; ++j)
    rec.realized[j] = panel.prices(trade_row + 1, j) / panel.prices(trade_row, j) - 1.0;
  rec.wealth_change = rec.holdings.dot(rec.realized) +
                      cfg.r * (x - rec.holdings.sum()) * kTradingDt;
  ledger.wealth.append(x + rec.wealth_change);
  ledger.days.push_back(std::move(rec));
}

// ------------------------------------------------------------ full run

// Runs `cfg.days` consecutive days starting at price row `start_row`. The
// benchmark column is excluded from the tradable universe and reported as
// buy-and-hold normalized to 1 at the trading start.
inline BacktestResult run_backtest(const PricePanel& panel, std::string_view benchmark,
                                   Eigen::Index start_row, const BacktestConfig& cfg) {
  validate_backtest_config(cfg);
  const Eigen::Index bench_col = panel.column(benchmark);
  const PricePanel traded = drop_column(panel, bench_col);
  if (traded.assets() < 1)
    throw std::invalid_argument("run_backtest: no tradable assets besides the benchmark");
  if (start_row < cfg.window)
    throw std::invalid_argument("run_backtest: start row " + std::to_string(start_row) +
                                " has fewer than window=" + std::to_string(cfg.window) +
                                " prior returns");
  if (start_row + cfg.days >= panel.days())
    throw std::invalid_argument("run_backtest: panel ends before day " +
                                std::to_string(cfg.days));

  BacktestResult result;
  // The wealth grid spans [0, (days+1)*dt]: the seeded history covers the
  // first interval and each trading day appends one point. Every day's
  // network is trained to the same terminal time.
  BacktestConfig day_cfg = cfg;
  day_cfg.solver.N = cfg.days + 1;
  day_cfg.solver.T = kTradingDt * static_cast<double>(cfg.days + 1);

  for (int k = 0; k < cfg.days; ++k)
    run_day(result.ledger, traded, start_row + k, day_cfg, k);

  result.benchmark.ticker = std::string(benchmark);
  const double base = panel.prices(start_row, bench_col);
  if (!(base > 0.0)) throw std::runtime_error("run_backtest: benchmark price must be positive");
  for (int k = 0; k <= cfg.days; ++k)
    result.benchmark.values.push_back(panel.prices(start_row + k, bench_col) / base);
  return result;
}

// ------------------------------------------------------------ metrics

struct SeriesMetrics {
  double total_return = 0.0;
  double daily_vol = 0.0;     // sample std of per-step simple returns
  double max_drawdown = 0.0;  // worst peak-to-trough fraction
  double final_value = 0.0;
};

inline SeriesMetrics compute_metrics(const std::vector<double>& series) {
  if (series.empty()) throw std::invalid_argument("compute_metrics: empty series");
  for (double v : series)
    if (!(v > 0.0)) throw std::invalid_argument("compute_metrics: values must be positive");
  SeriesMetrics m;
  m.final_value = series.back();
  m.total_return = series.back() / series.front() - 1.0;

  const std::size_t n = series.size();
  if (n >= 3) {
    std::vector<double> rets(n - 1);
    double mean = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      rets[i] = series[i + 1] / series[i] - 1.0;
      mean += rets[i];
    }
    mean /= static_cast<double>(rets.size());
    double ss = 0.0;
    for (double r : rets) ss += (r - mean) * (r - mean);
    m.daily_vol = std::sqrt(ss / static_cast<double>(rets.size() - 1));
  }

  double peak = series.front();
  for (double v : series) {
    peak = std::max(peak, v);
    m.max_drawdown = std::max(m.max_drawdown, 1.0 - v / peak);
  }
  return m;
}

// ------------------------------------------------------------ reports

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);  // binary: no newline translation
  if (!out) throw std::runtime_error("report: cannot write " + file.string());
  return out;
}

}  // namespace detail

// step,time,wealth,benchmark — one row per wealth point. The benchmark is
// aligned to the trading start (wealth index 1), so row 0 has no benchmark.
inline void write_ledger_csv(const WealthLedger& ledger, const BenchmarkSeries& bench,
                             const std::filesystem::path& file) {
  auto out = detail::open_out(file);
  out << "step,time,wealth," << bench.ticker << "\n";
  for (std::size_t i = 0; i < ledger.wealth.size(); ++i) {
    out << i << ',' << format_double(ledger.wealth.time(i)) << ','
        << format_double(ledger.wealth.values[i]) << ',';
    if (i >= 1 && i - 1 < bench.values.size()) out << format_double(bench.values[i - 1]);
    out << "\n";
  }
}

inline void write_holdings_csv(const WealthLedger& ledger, const std::vector<std::string>& tickers,
                               const std::vector<std::string>& dates,
                               const std::filesystem::path& file) {
  auto out = detail::open_out(file);
  out << "day,date";
  for (const auto& t : tickers) out << ',' << t;
  out << "\n";
  for (std::size_t k = 0; k < ledger.days.size(); ++k) {
    out << k << ',' << (k < dates.size() ? dates[k] : "");
    const auto& h = ledger.days[k].holdings;
    for (Eigen::Index j = 0; j < h.size(); ++j) out << ',' << format_double(h[j]);
    out << "\n";
  }
}

inline void write_metrics_json(const WealthLedger& ledger, const BenchmarkSeries& bench,
                               const std::filesystem::path& file) {
  const SeriesMetrics s = compute_metrics(ledger.wealth.values);
  const SeriesMetrics b = compute_metrics(bench.values);
  nlohmann::json j;
  j["days"] = ledger.days.size();
  j["strategy"] = {{"total_return", s.total_return},
                   {"daily_vol", s.daily_vol},
                   {"max_drawdown", s.max_drawdown},
                   {"final_wealth", s.final_value}};
  j["benchmark"] = {{"ticker", bench.ticker},
                    {"total_return", b.total_return},
                    {"daily_vol", b.daily_vol},
                    {"max_drawdown", b.max_drawdown},
                    {"final_value", b.final_value}};
  auto out = detail::open_out(file);
  out << j.dump(2) << "\n";
}

// Wealth vs buy-and-hold benchmark as an SVG line chart. Pure function of the
// series values: fixed canvas, fixed-precision coordinates, no timestamps.
inline void write_chart_svg(const WealthLedger& ledger, const BenchmarkSeries& bench,
                            const std::filesystem::path& file) {
  const double W = 800.0, H = 420.0, ml = 64.0, mr = 24.0, mt = 32.0, mb = 40.0;
  const std::vector<double>& w = ledger.wealth.values;
  double lo = w.front(), hi = w.front();
  for (double v : w) { lo = std::min(lo, v); hi = std::max(hi, v); }
  for (double v : bench.values) { lo = std::min(lo, v); hi = std::max(hi, v); }
  if (hi - lo < 1e-12) { hi += 0.5; lo -= 0.5; }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const std::size_t n = w.size();
  const auto sx = [&](double i) {
    return ml + (W - ml - mr) * i / static_cast<double>(n - 1);
  };
  const auto sy = [&](double v) { return mt + (H - mt - mb) * (hi - v) / (hi - lo); };
  const auto pt = [&](double i, double v) {
    return format_fixed(sx(i), 2) + "," + format_fixed(sy(v), 2);
  };

  auto out = detail::open_out(file);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 420\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"800\" height=\"420\" fill=\"white\"/>\n"
      << "<text x=\"64\" y=\"20\" font-size=\"14\">Strategy wealth vs " << bench.ticker
      << " (buy and hold)</text>\n";
  // axes
  out << "<line x1=\"" << format_fixed(ml, 2) << "\" y1=\"" << format_fixed(mt, 2) << "\" x2=\""
      << format_fixed(ml, 2) << "\" y2=\"" << format_fixed(H - mb, 2)
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << format_fixed(ml, 2) << "\" y1=\"" << format_fixed(H - mb, 2)
      << "\" x2=\"" << format_fixed(W - mr, 2) << "\" y2=\"" << format_fixed(H - mb, 2)
      << "\" stroke=\"black\"/>\n";
  // y-range labels, x-range labels
  out << "<text x=\"8\" y=\"" << format_fixed(mt + 4, 2) << "\">" << format_fixed(hi, 4)
      << "</text>\n"
      << "<text x=\"8\" y=\"" << format_fixed(H - mb, 2) << "\">" << format_fixed(lo, 4)
      << "</text>\n"
      << "<text x=\"" << format_fixed(ml, 2) << "\" y=\"" << format_fixed(H - 12, 2)
      << "\">step 0</text>\n"
      << "<text x=\"" << format_fixed(W - mr - 60, 2) << "\" y=\"" << format_fixed(H - 12, 2)
      << "\">step " << (n - 1) << "</text>\n";
  // strategy polyline over all wealth points
  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out << ' ';
    out << pt(static_cast<double>(i), w[i]);
  }
  out << "\"/>\n";
  // benchmark polyline, aligned to the trading start at wealth index 1
  out << "<polyline fill=\"none\" stroke=\"#888888\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < bench.values.size(); ++i) {
    if (i) out << ' ';
    out << pt(static_cast<double>(i + 1), bench.values[i]);
  }
  out << "\"/>\n";
  out << "<rect x=\"640\" y=\"40\" width=\"12\" height=\"4\" fill=\"#1f77b4\"/>\n"
      << "<text x=\"658\" y=\"46\">strategy</text>\n"
      << "<rect x=\"640\" y=\"58\" width=\"12\" height=\"4\" fill=\"#888888\"/>\n"
      << "<text x=\"658\" y=\"64\">" << bench.ticker << "</text>\n"
      << "</svg>\n";
}

// Writes ledger.csv, holdings.csv, metrics.json, chart.svg under out_dir.
// `tickers` names the holdings columns; `dates` the traded rows, in order.
inline void report(const WealthLedger& ledger, const BenchmarkSeries& bench,
                   const std::vector<std::string>& tickers,
                   const std::vector<std::string>& dates,
                   const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_ledger_csv(ledger, bench, out_dir / "ledger.csv");
  write_holdings_csv(ledger, tickers, dates, out_dir / "holdings.csv");
  write_metrics_json(ledger, bench, out_dir / "metrics.json");
  write_chart_svg(ledger, bench, out_dir / "chart.svg");
}

}  // namespace pathmv
