#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "pathmv/backtest.hpp"
#include "support.hpp"

using namespace pathmv;
using testsupport::TempDir;
using testsupport::slurp;

namespace {

// Panel of `d` tradable random-walk assets plus a trailing benchmark column
// "BMK": p_{t+1} = p_t (1 + step * z), zero drift.
PricePanel walk_panel(int d, int rows, std::uint64_t seed, double step = 0.01) {
  PricePanel panel;
  for (int j = 0; j < d; ++j) panel.tickers.push_back("A" + std::to_string(j));
  panel.tickers.push_back("BMK");
  panel.prices.resize(rows, d + 1);
  Rng rng(seed);
  for (int j = 0; j <= d; ++j) {
    double p = 100.0;
    for (int i = 0; i < rows; ++i) {
      panel.prices(i, j) = p;
      p *= 1.0 + step * rng.normal();
    }
  }
  for (int i = 0; i < rows; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "2024-%02d-%02d", 1 + i / 28, 1 + i % 28);
    panel.dates.emplace_back(buf);
  }
  return panel;
}

PricePanel constant_panel(int d, int rows) {
  PricePanel panel = walk_panel(d, rows, 1);
  panel.prices.setConstant(100.0);
  return panel;
}

SolverConfig micro_solver() {
  SolverConfig s;
  s.M = 8;
  s.epochs = 8;
  s.outer_rounds = 1;
  s.eps = 0.05;
  s.adam.lr = 1e-3;
  s.net.hidden = 3;
  s.net.widths = {4};
  return s;
}

}  // namespace

TEST_CASE("shortest round-trip and fixed-precision formatting") {
  REQUIRE(format_double(1.0) == "1");
  REQUIRE(format_double(1.01) == "1.01");
  REQUIRE(format_double(0.1) == "0.1");
  REQUIRE(format_double(-2.5) == "-2.5");
  REQUIRE(format_fixed(1.5, 2) == "1.50");
  REQUIRE(format_fixed(3.14159, 3) == "3.142");
  // round-trip exactness on awkward values
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double v = rng.normal() * std::exp(5.0 * rng.normal());
    REQUIRE(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("series metrics: hand values and a recomputation oracle") {
  const auto flat = compute_metrics({1.0, 1.0, 1.0});
  REQUIRE(flat.total_return == 0.0);
  REQUIRE(flat.daily_vol == 0.0);
  REQUIRE(flat.max_drawdown == 0.0);
  REQUIRE(flat.final_value == 1.0);

  const auto spike = compute_metrics({1.0, 2.0, 1.0});
  REQUIRE(spike.total_return == 0.0);
  REQUIRE(spike.max_drawdown == 0.5);
  // returns {1, -0.5}, mean 0.25, sample variance 1.125
  REQUIRE(spike.daily_vol == Catch::Approx(std::sqrt(1.125)).margin(1e-15));

  REQUIRE(compute_metrics({2.0}).total_return == 0.0);
  REQUIRE_THROWS_AS(compute_metrics({}), std::invalid_argument);
  REQUIRE_THROWS_AS(compute_metrics({1.0, -1.0}), std::invalid_argument);

  Rng rng(11);
  std::vector<double> s;
  double v = 1.0;
  for (int i = 0; i < 20; ++i) {
    s.push_back(v);
    v *= std::exp(0.05 * rng.normal());
  }
  const auto m = compute_metrics(s);
  REQUIRE(m.total_return == Catch::Approx(s.back() / s.front() - 1.0).margin(1e-15));
  std::vector<double> rets;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) rets.push_back(s[i + 1] / s[i] - 1.0);
  double mean = 0.0;
  for (double r : rets) mean += r;
  mean /= static_cast<double>(rets.size());
  double ss = 0.0;
  for (double r : rets) ss += (r - mean) * (r - mean);
  REQUIRE(m.daily_vol ==
          Catch::Approx(std::sqrt(ss / static_cast<double>(rets.size() - 1))).margin(1e-12));
  double dd = 0.0;  // worst pairwise drop, i < j
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i; j < s.size(); ++j) dd = std::max(dd, 1.0 - s[j] / s[i]);
  REQUIRE(m.max_drawdown == Catch::Approx(dd).margin(1e-12));
}

TEST_CASE("dropping a column removes exactly that asset") {
  const PricePanel panel = walk_panel(2, 5, 9);  // A0, A1, BMK
  const PricePanel out = drop_column(panel, 1);
  REQUIRE(out.tickers == std::vector<std::string>{"A0", "BMK"});
  REQUIRE(out.assets() == 2);
  REQUIRE(out.days() == 5);
  REQUIRE(out.prices.col(0) == panel.prices.col(0));
  REQUIRE(out.prices.col(1) == panel.prices.col(2));
  REQUIRE(out.dates == panel.dates);
  REQUIRE_THROWS_AS(drop_column(panel, 3), std::invalid_argument);
}

TEST_CASE("zero realized returns leave wealth unchanged no matter the holdings") {
  const PricePanel panel = constant_panel(2, 6);
  BacktestConfig cfg;
  cfg.window = 2;
  cfg.days = 2;
  cfg.ridge = 1e-4;  // constant prices have zero sample covariance
  cfg.solver = micro_solver();
  const auto result = run_backtest(panel, "BMK", 2, cfg);
  REQUIRE(result.ledger.wealth.values == std::vector<double>{1.0, 1.01, 1.01, 1.01});
  for (const auto& day : result.ledger.days) {
    REQUIRE(day.realized.isZero(0.0));
    REQUIRE(day.wealth_change == 0.0);
    REQUIRE(day.holdings.size() == 2);
  }
  REQUIRE(result.benchmark.values == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("zero-holdings debug flag freezes wealth on a moving market") {
  const PricePanel panel = walk_panel(3, 12, 21);
  BacktestConfig cfg;
  cfg.window = 4;
  cfg.days = 3;
  cfg.zero_holdings = true;
  cfg.solver = micro_solver();
  const auto result = run_backtest(panel, "BMK", 5, cfg);
  REQUIRE(result.ledger.wealth.values == std::vector<double>{1.0, 1.01, 1.01, 1.01, 1.01});
  for (const auto& day : result.ledger.days) {
    REQUIRE(day.holdings.isZero(0.0));
    REQUIRE_FALSE(day.realized.isZero(0.0));  // the market did move
    REQUIRE(day.wealth_change == 0.0);
  }
}

TEST_CASE("single day appends exactly one wealth point") {
  const PricePanel panel = walk_panel(2, 8, 33);
  BacktestConfig cfg;
  cfg.window = 3;
  cfg.days = 1;
  cfg.solver = micro_solver();
  const auto result = run_backtest(panel, "BMK", 4, cfg);
  REQUIRE(result.ledger.wealth.size() == 3);
  REQUIRE(result.ledger.days.size() == 1);
  REQUIRE(result.benchmark.values.size() == 2);
  REQUIRE(result.benchmark.values[0] == 1.0);
}

TEST_CASE("ledger is bit-identical across reruns and moves with the seed") {
  const PricePanel panel = walk_panel(3, 14, 77);
  BacktestConfig cfg;
  cfg.window = 5;
  cfg.days = 2;
  cfg.seed = 42;
  cfg.solver = micro_solver();

  const auto a = run_backtest(panel, "BMK", 6, cfg);
  const auto b = run_backtest(panel, "BMK", 6, cfg);
  REQUIRE(a.ledger.wealth.values == b.ledger.wealth.values);
  REQUIRE(a.ledger.wealth.size() == 4);  // 2 + completed days
  for (std::size_t k = 0; k < a.ledger.days.size(); ++k) {
    REQUIRE(a.ledger.days[k].holdings == b.ledger.days[k].holdings);
    REQUIRE(a.ledger.days[k].theta == b.ledger.days[k].theta);
    REQUIRE(a.ledger.days[k].policy.mean == b.ledger.days[k].policy.mean);
  }
  REQUIRE(a.benchmark.values == b.benchmark.values);

  BacktestConfig other = cfg;
  other.seed = 43;
  const auto c = run_backtest(panel, "BMK", 6, other);
  REQUIRE(a.ledger.wealth.values != c.ledger.wealth.values);
}

TEST_CASE("one-day wealth change equals the direct recomputation") {
  const PricePanel panel = walk_panel(3, 14, 5);
  for (double r : {0.0, 0.02}) {
    BacktestConfig cfg;
    cfg.window = 5;
    cfg.days = 3;
    cfg.seed = 7;
    cfg.r = r;
    cfg.solver = micro_solver();
    const auto result = run_backtest(panel, "BMK", 6, cfg);
    const PricePanel traded = drop_column(panel, panel.column("BMK"));
    for (int k = 0; k < cfg.days; ++k) {
      const auto& day = result.ledger.days[static_cast<std::size_t>(k)];
      const double x_before = result.ledger.wealth.values[static_cast<std::size_t>(1 + k)];
      double want = 0.0;
      for (Eigen::Index j = 0; j < traded.assets(); ++j) {
        const double realized = traded.prices(6 + k + 1, j) / traded.prices(6 + k, j) - 1.0;
        REQUIRE(day.realized[j] == realized);
        want += day.holdings[j] * realized;
      }
      want += r * (x_before - day.holdings.sum()) * kTradingDt;
      REQUIRE(day.wealth_change == Catch::Approx(want).margin(1e-15));
      REQUIRE(result.ledger.wealth.values[static_cast<std::size_t>(2 + k)] ==
              x_before + day.wealth_change);
    }
  }
}

TEST_CASE("benchmark series is buy-and-hold normalized at the trading start") {
  const PricePanel panel = walk_panel(2, 12, 13);
  BacktestConfig cfg;
  cfg.window = 3;
  cfg.days = 4;
  cfg.zero_holdings = true;  // benchmark path is independent of trading
  cfg.solver = micro_solver();
  const auto result = run_backtest(panel, "BMK", 5, cfg);
  const Eigen::Index b = panel.column("BMK");
  REQUIRE(result.benchmark.ticker == "BMK");
  REQUIRE(result.benchmark.values.size() == 5);
  for (int k = 0; k <= 4; ++k)
    REQUIRE(result.benchmark.values[static_cast<std::size_t>(k)] ==
            panel.prices(5 + k, b) / panel.prices(5, b));
  // holdings exclude the benchmark column
  REQUIRE(result.ledger.days[0].holdings.size() == 2);
}

TEST_CASE("warm start reuses the previous day's parameters") {
  const PricePanel panel = walk_panel(2, 14, 99);
  BacktestConfig cold;
  cold.window = 5;
  cold.days = 2;
  cold.seed = 11;
  cold.solver = micro_solver();
  BacktestConfig warm = cold;
  warm.warm_start = true;

  const auto a = run_backtest(panel, "BMK", 6, cold);
  const auto b = run_backtest(panel, "BMK", 6, warm);
  // day 0 has no predecessor: identical either way
  REQUIRE(a.ledger.days[0].holdings == b.ledger.days[0].holdings);
  REQUIRE(a.ledger.days[0].theta == b.ledger.days[0].theta);
  // day 1 starts from day 0's parameters instead of a fresh init
  REQUIRE(a.ledger.days[1].theta != b.ledger.days[1].theta);

  const auto b2 = run_backtest(panel, "BMK", 6, warm);
  REQUIRE(b.ledger.wealth.values == b2.ledger.wealth.values);
}

TEST_CASE("run validation and per-day failure diagnostics") {
  const PricePanel panel = walk_panel(2, 10, 3);
  BacktestConfig cfg;
  cfg.window = 4;
  cfg.days = 2;
  cfg.solver = micro_solver();
  REQUIRE_THROWS_AS(run_backtest(panel, "NOPE", 5, cfg), std::invalid_argument);
  REQUIRE_THROWS_AS(run_backtest(panel, "BMK", 3, cfg), std::invalid_argument);   // < window
  REQUIRE_THROWS_AS(run_backtest(panel, "BMK", 8, cfg), std::invalid_argument);   // too late
  BacktestConfig bad = cfg;
  bad.days = 0;
  REQUIRE_THROWS_AS(run_backtest(panel, "BMK", 5, bad), std::invalid_argument);
  bad = cfg;
  bad.window = 1;
  REQUIRE_THROWS_AS(run_backtest(panel, "BMK", 5, bad), std::invalid_argument);

  BacktestConfig boom = cfg;
  boom.solver.adam.lr = 1e200;  // training diverges on day 0
  REQUIRE_THROWS_MATCHES(run_backtest(panel, "BMK", 5, boom), std::runtime_error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("backtest day 0")));
}

TEST_CASE("report files are complete, parseable, and byte-identical across writes") {
  WealthLedger ledger;
  ledger.wealth.append(1.03);
  ledger.wealth.append(0.99);
  for (int k = 0; k < 2; ++k) {
    DayRecord rec;
    rec.holdings = Eigen::VectorXd::Constant(2, 0.25 * (k + 1));
    rec.realized = Eigen::VectorXd::Zero(2);
    ledger.days.push_back(rec);
  }
  BenchmarkSeries bench{"IDX", {1.0, 1.02, 1.01}};
  const std::vector<std::string> tickers = {"A0", "A1"};
  const std::vector<std::string> dates = {"2024-01-02", "2024-01-03"};

  TempDir dir1("report1"), dir2("report2");
  report(ledger, bench, tickers, dates, dir1.path);
  report(ledger, bench, tickers, dates, dir2.path);

  const std::string csv = slurp(dir1.file("ledger.csv"));
  REQUIRE(csv ==
          "step,time,wealth,IDX\n"
          "0," + format_double(0.0) + ",1,\n"
          "1," + format_double(kTradingDt) + ",1.01,1\n"
          "2," + format_double(2 * kTradingDt) + ",1.03,1.02\n"
          "3," + format_double(3 * kTradingDt) + ",0.99,1.01\n");

  const std::string holdings = slurp(dir1.file("holdings.csv"));
  REQUIRE(holdings ==
          "day,date,A0,A1\n"
          "0,2024-01-02,0.25,0.25\n"
          "1,2024-01-03,0.5,0.5\n");

  const auto metrics = nlohmann::json::parse(slurp(dir1.file("metrics.json")));
  const auto want = compute_metrics(ledger.wealth.values);
  REQUIRE(metrics["days"] == 2);
  REQUIRE(metrics["strategy"]["total_return"].get<double>() == want.total_return);
  REQUIRE(metrics["strategy"]["daily_vol"].get<double>() == want.daily_vol);
  REQUIRE(metrics["strategy"]["max_drawdown"].get<double>() == want.max_drawdown);
  REQUIRE(metrics["benchmark"]["ticker"] == "IDX");
  REQUIRE(metrics["benchmark"]["final_value"].get<double>() == 1.01);

  const std::string svg = slurp(dir1.file("chart.svg"));
  REQUIRE(svg.find("<svg") == 0);
  REQUIRE(svg.find("polyline") != std::string::npos);
  REQUIRE(svg.find("IDX") != std::string::npos);

  for (const char* name : {"ledger.csv", "holdings.csv", "metrics.json", "chart.svg"})
    REQUIRE(slurp(dir1.file(name)) == slurp(dir2.file(name)));
}

TEST_CASE("null market: no systematic edge for the strategy") {
  // Zero-drift walks with identical distributions across assets: expected
  // terminal wealth equals the seeded 1.01 no matter the policy, because
  // holdings are chosen before the (independent, mean-zero) returns land.
  // A lookahead bug anywhere in the day loop would bias this mean.
  std::vector<double> terminals;
  for (std::uint64_t seed = 1; seed <= 16; ++seed) {
    const PricePanel panel = walk_panel(3, 26, derive_seed(seed, "null-panel"));
    BacktestConfig cfg;
    cfg.window = 20;
    cfg.days = 2;
    cfg.seed = seed;
    cfg.solver = micro_solver();
    // a high curvature floor keeps sampled positions small, so the mean test
    // below has power: position scale ~ Sigma^{-1} mu_hat dx/c
    cfg.solver.eps = 1.0;
    const auto result = run_backtest(panel, "BMK", 21, cfg);
    const double xT = result.ledger.wealth.tip();
    REQUIRE(std::isfinite(xT));
    terminals.push_back(xT);
  }
  double mean = 0.0;
  for (double t : terminals) mean += t;
  mean /= static_cast<double>(terminals.size());
  double ss = 0.0;
  for (double t : terminals) ss += (t - mean) * (t - mean);
  const double se = std::sqrt(ss / static_cast<double>(terminals.size() - 1) /
                              static_cast<double>(terminals.size()));
  REQUIRE(se < 0.2);
  REQUIRE(std::abs(mean - 1.01) <= 4.0 * se + 1e-9);
}
