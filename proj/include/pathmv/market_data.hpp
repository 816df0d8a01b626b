#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Price-panel loading, return series, and market parameter estimation.
//
// Input CSV contract: header "date,TICKER1,TICKER2,..."; one row per trading
// day with an ISO-8601 date and one price per ticker; dates strictly
// increasing. An asset with any missing, unparseable, or non-positive price
// is dropped from the panel and the reason is reported to the caller.

namespace pathmv {

inline constexpr double kTradingDaysPerYear = 252.0;

struct PricePanel {
  std::vector<std::string> tickers;
  std::vector<std::string> dates;
  Eigen::MatrixXd prices;  // rows = dates, cols = tickers

  Eigen::Index days() const { return prices.rows(); }
  Eigen::Index assets() const { return prices.cols(); }

  Eigen::Index column(std::string_view ticker) const {
    for (std::size_t j = 0; j < tickers.size(); ++j)
      if (tickers[j] == ticker) return static_cast<Eigen::Index>(j);
    throw std::invalid_argument("PricePanel: no such ticker: " + std::string(ticker));
  }
};

struct LoadResult {
  PricePanel panel;
  std::vector<std::string> exclusions;  // one line per dropped asset
};

using ReturnSeries = Eigen::VectorXd;  // simple returns, one per day step

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  // trim spaces
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace detail

inline LoadResult load_prices(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_prices: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_prices: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "date")
    throw std::runtime_error("load_prices: header must be 'date,TICKER,...' in " + path);
  const std::size_t n_assets = header.size() - 1;

  std::vector<std::string> dates;
  std::vector<std::vector<double>> cols(n_assets);
  // first problem seen per asset, empty = clean
  std::vector<std::string> problem(n_assets);

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("load_prices: row with " + std::to_string(fields.size()) +
                               " fields, expected " + std::to_string(header.size()));
    if (!dates.empty() && fields[0] <= dates.back())
      throw std::runtime_error("load_prices: dates must be strictly increasing at " + fields[0]);
    dates.push_back(fields[0]);
    for (std::size_t j = 0; j < n_assets; ++j) {
      double v = 0.0;
      if (!detail::parse_double(fields[j + 1], v)) {
        if (problem[j].empty())
          problem[j] = header[j + 1] + ": missing or unparseable price at " + fields[0];
        v = std::numeric_limits<double>::quiet_NaN();
      } else if (!(v > 0.0)) {
        if (problem[j].empty())
          problem[j] = header[j + 1] + ": non-positive price at " + fields[0];
      }
      cols[j].push_back(v);
    }
  }
  if (dates.size() < 2) throw std::runtime_error("load_prices: fewer than 2 dates in " + path);

  LoadResult result;
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < n_assets; ++j) {
    if (problem[j].empty())
      keep.push_back(j);
    else
      result.exclusions.push_back(problem[j]);
  }
  if (keep.empty()) throw std::runtime_error("load_prices: no usable assets in " + path);

  result.panel.dates = std::move(dates);
  result.panel.prices.resize(static_cast<Eigen::Index>(result.panel.dates.size()),
                             static_cast<Eigen::Index>(keep.size()));
  for (std::size_t jj = 0; jj < keep.size(); ++jj) {
    result.panel.tickers.push_back(header[keep[jj] + 1]);
    for (std::size_t i = 0; i < result.panel.dates.size(); ++i)
      result.panel.prices(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(jj)) =
          cols[keep[jj]][i];
  }
  return result;
}

// Simple returns per asset: r[k] = p[k+1]/p[k] - 1, one series per column.
inline std::vector<ReturnSeries> to_returns(const PricePanel& panel) {
  if (panel.days() < 2) throw std::invalid_argument("to_returns: need at least 2 dates");
  std::vector<ReturnSeries> out;
  out.reserve(static_cast<std::size_t>(panel.assets()));
  for (Eigen::Index j = 0; j < panel.assets(); ++j) {
    ReturnSeries r(panel.days() - 1);
    for (Eigen::Index k = 0; k + 1 < panel.days(); ++k)
      r(k) = panel.prices(k + 1, j) / panel.prices(k, j) - 1.0;
    out.push_back(std::move(r));
  }
  return out;
}

// prod(1 + x_i); empty series compounds to 1.
inline double cumulative_return(const ReturnSeries& x) {
  double p = 1.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) p *= 1.0 + x(i);
  return p;
}

struct ModelParams {
  Eigen::VectorXd mu;     // annualized drift per asset
  Eigen::MatrixXd Sigma;  // annualized covariance
  Eigen::MatrixXd sigma;  // lower-triangular Cholesky factor, Sigma = sigma * sigma^T
  double r = 0.0;         // risk-free rate

  Eigen::Index d() const { return mu.size(); }
  Eigen::VectorXd excess() const {
    return mu - Eigen::VectorXd::Constant(mu.size(), r);
  }
};

inline ModelParams make_params(Eigen::VectorXd mu, Eigen::MatrixXd Sigma, double r) {
  if (Sigma.rows() != Sigma.cols() || Sigma.rows() != mu.size())
    throw std::invalid_argument("make_params: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(Sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("make_params: covariance is not positive definite");
  ModelParams p;
  p.mu = std::move(mu);
  p.sigma = llt.matrixL();
  p.Sigma = std::move(Sigma);
  p.r = r;
  return p;
}

// Default diagonal loading: 1e-6 times the mean diagonal of the raw covariance.
inline double auto_ridge(const Eigen::MatrixXd& Sigma_raw) {
  return 1e-6 * Sigma_raw.diagonal().mean();
}

// Trailing-window estimate at price row `day`: uses the `window` daily simple
// returns that are fully realized by that row (price rows day-window .. day),
// annualized by 252. `ridge` is added to the covariance diagonal before the
// Cholesky factorization; pass a negative value to use auto_ridge.
inline ModelParams estimate_params(const PricePanel& panel, Eigen::Index day,
                                   Eigen::Index window, double r, double ridge) {
  if (window < 2) throw std::invalid_argument("estimate_params: window must be >= 2");
  if (day < window)
    throw std::invalid_argument("estimate_params: day " + std::to_string(day) +
                                " has fewer than window=" + std::to_string(window) +
                                " prior returns");
  if (day >= panel.days())
    throw std::invalid_argument("estimate_params: day beyond panel end");

  const Eigen::Index d = panel.assets();
  Eigen::MatrixXd R(window, d);
  for (Eigen::Index k = 0; k < window; ++k) {
    const Eigen::Index row = day - window + k;
    for (Eigen::Index j = 0; j < d; ++j)
      R(k, j) = panel.prices(row + 1, j) / panel.prices(row, j) - 1.0;
  }

  const Eigen::RowVectorXd mean = R.colwise().mean();
  Eigen::MatrixXd centered = R.rowwise() - mean;
  Eigen::MatrixXd Sigma = kTradingDaysPerYear *
                          (centered.transpose() * centered) /
                          static_cast<double>(window - 1);
  if (ridge < 0.0) ridge = auto_ridge(Sigma);
  Sigma.diagonal().array() += ridge;

  return make_params(kTradingDaysPerYear * mean.transpose(), std::move(Sigma), r);
}

}  // namespace pathmv
