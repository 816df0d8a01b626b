#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pathmv/rng.hpp"

// Shared test plumbing: scratch directories, independent oracle
// implementations (written against the formulas, not against the library),
// and the deterministic synthetic panel generator used by the bundled data
// file and the end-to-end tests.

namespace testsupport {

// ---------------------------------------------------------------- scratch

struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& hint) {
    static std::atomic<unsigned> counter{0};
    auto base = std::filesystem::temp_directory_path();
    path = base / ("pathmv_" + hint + "_" + std::to_string(::getpid()) + "_" +
                   std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------- oracles

// Similarity metric recomputed directly from its definition.
inline double oracle_sim(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double w) {
  double px = 1.0, py = 1.0, dot = 0.0, sx = 0.0, sy = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    px *= 1.0 + x(i);
    py *= 1.0 + y(i);
    dot += x(i) * y(i);
    sx += x(i) * x(i);
    sy += y(i) * y(i);
  }
  const double e = std::abs(px - py);
  const double t = dot / (std::sqrt(sx) * std::sqrt(sy));
  return w / (1.0 + e) + (1.0 - w) * t;
}

// Partition energy recomputed cluster by cluster.
inline double oracle_energy(const std::vector<int>& assignment, const Eigen::MatrixXd& S,
                            double kappa, int k_max) {
  std::vector<std::vector<int>> clusters(static_cast<std::size_t>(k_max));
  for (std::size_t i = 0; i < assignment.size(); ++i)
    clusters[static_cast<std::size_t>(assignment[i])].push_back(static_cast<int>(i));
  int K = 0;
  for (const auto& c : clusters)
    if (!c.empty()) ++K;
  double E = 0.0;
  for (const auto& c : clusters) {
    if (c.empty()) continue;
    double mass = 0.0;
    for (std::size_t a = 0; a < c.size(); ++a)
      for (std::size_t b = a + 1; b < c.size(); ++b) mass += S(c[a], c[b]);
    E += 1.0 - kappa / static_cast<double>(K - 1) * mass;
  }
  return E;
}

// All slot assignments of n assets with at least two nonempty clusters.
inline std::vector<std::vector<int>> enumerate_valid_assignments(int n, int k_max) {
  std::vector<std::vector<int>> out;
  std::vector<int> a(static_cast<std::size_t>(n), 0);
  while (true) {
    bool valid = false;
    for (int i = 1; i < n && !valid; ++i) valid = a[static_cast<std::size_t>(i)] != a[0];
    if (valid) out.push_back(a);
    int pos = n - 1;
    while (pos >= 0 && a[static_cast<std::size_t>(pos)] == k_max - 1) {
      a[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    ++a[static_cast<std::size_t>(pos)];
  }
  return out;
}

inline double comb2(double x) { return x * (x - 1.0) / 2.0; }

inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, long> cont;
  std::map<int, long> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++cont[{a[i], b[i]}];
    ++ra[a[i]];
    ++rb[b[i]];
  }
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : cont) sum_ij += comb2(static_cast<double>(v));
  for (const auto& [k, v] : ra) sum_a += comb2(static_cast<double>(v));
  for (const auto& [k, v] : rb) sum_b += comb2(static_cast<double>(v));
  const double total = comb2(static_cast<double>(a.size()));
  const double expected = sum_a * sum_b / total;
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivially identical
  return (sum_ij - expected) / (max_index - expected);
}

// Sample covariance with the n-1 denominator, naive loops.
inline Eigen::MatrixXd oracle_cov(const Eigen::MatrixXd& R) {
  const Eigen::Index n = R.rows(), d = R.cols();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  for (Eigen::Index k = 0; k < n; ++k) mean += R.row(k).transpose();
  mean /= static_cast<double>(n);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::VectorXd c = R.row(k).transpose() - mean;
    C += c * c.transpose();
  }
  return C / static_cast<double>(n - 1);
}

// ------------------------------------------------------------- civil dates

// Howard Hinnant's civil-date algorithms (public-domain arithmetic).
inline long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

inline std::string civil_from_days(long z) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  long y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : static_cast<unsigned>(-9));
  y += (m <= 2);
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%04ld-%02u-%02u", y, m, d);
  return buf;
}

// ------------------------------------------------------- synthetic panels

// Daily GBM price panel in the loader's CSV format. Deterministic in `seed`;
// weekends are not modeled (every calendar day trades).
inline std::string synthetic_panel_csv(int n_days, const std::vector<std::string>& tickers,
                                       const std::vector<double>& mu,
                                       const std::vector<double>& vol,
                                       std::uint64_t seed,
                                       const std::string& start_date = "2024-01-01") {
  const double dt = 1.0 / 252.0;
  const long day0 = days_from_civil(2024, 1, 1);
  (void)start_date;
  std::string out = "date";
  for (const auto& t : tickers) out += "," + t;
  out += "\n";
  std::vector<double> price(tickers.size());
  for (std::size_t j = 0; j < tickers.size(); ++j) price[j] = 50.0 + 3.0 * static_cast<double>(j);
  char buf[64];
  for (int k = 0; k < n_days; ++k) {
    out += civil_from_days(day0 + k);
    for (std::size_t j = 0; j < tickers.size(); ++j) {
      if (k > 0) {
        const double z = pathmv::counter_normal(seed, j, static_cast<std::uint64_t>(k), 0);
        price[j] *= std::exp((mu[j] - 0.5 * vol[j] * vol[j]) * dt + vol[j] * std::sqrt(dt) * z);
      }
      std::snprintf(buf, sizeof(buf), ",%.6f", price[j]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

// The bundled 30-asset panel (+ benchmark column) used by the end-to-end
// determinism test. data/synthetic_panel_30.csv must equal this byte for
// byte; a unit test enforces it.
inline std::string bundled_panel_csv() {
  std::vector<std::string> tickers;
  std::vector<double> mu, vol;
  for (int j = 0; j < 30; ++j) {
    char name[8];
    std::snprintf(name, sizeof(name), "A%02d", j);
    tickers.emplace_back(name);
    mu.push_back(0.02 + 0.004 * static_cast<double>(j % 10));
    vol.push_back(0.12 + 0.008 * static_cast<double>(j % 7));
  }
  tickers.emplace_back("INDEX");
  mu.push_back(0.05);
  vol.push_back(0.11);
  return synthetic_panel_csv(220, tickers, mu, vol, 0x5EEDF00DULL);
}

}  // namespace testsupport
