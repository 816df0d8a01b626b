#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pathmv/io.hpp"
#include "pathmv/market_data.hpp"

// Hybrid return-similarity between two assets: a bounded transform of the
// distance between cumulative growth factors, blended with the cosine
// similarity of the raw return series,
//
//     sim(x, y) = w / (1 + e(x, y)) + (1 - w) * tau(x, y)
//
// with e = |prod(1+x) - prod(1+y)| and tau = <x,y> / (|x||y|). Values lie in
// (-(1-w), 1]; identical nonzero series score exactly 1.

namespace pathmv {

struct SimilarityConfig {
  double w = 0.5;  // weight on the cumulative-growth term
};

// |prod(1+x_i) - prod(1+y_i)|
inline double cum_distance(const ReturnSeries& x, const ReturnSeries& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("cum_distance: series lengths differ");
  return std::abs(cumulative_return(x) - cumulative_return(y));
}

// Cosine similarity, clamped to [-1, 1] against floating-point drift.
// A zero-norm series has no direction: hard error.
inline double tau(const ReturnSeries& x, const ReturnSeries& y) {
  if (x.size() != y.size()) throw std::invalid_argument("tau: series lengths differ");
  if (x.size() == 0) throw std::invalid_argument("tau: empty series");
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx == 0.0 || ny == 0.0)
    throw std::invalid_argument("tau: zero-norm return series is degenerate");
  const double t = x.dot(y) / (nx * ny);
  return std::clamp(t, -1.0, 1.0);
}

inline double sim(const ReturnSeries& x, const ReturnSeries& y,
                  const SimilarityConfig& cfg = {}) {
  if (!(cfg.w >= 0.0 && cfg.w <= 1.0))
    throw std::invalid_argument("sim: weight w must lie in [0, 1]");
  if (x.size() != y.size()) throw std::invalid_argument("sim: series lengths differ");
  if (x.size() == 0) throw std::invalid_argument("sim: empty series");
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx == 0.0 || ny == 0.0)
    throw std::invalid_argument("sim: zero-norm return series is degenerate");
  // Identical series score exactly 1; the general expression below can land
  // one ulp off because sqrt(s)^2 != s in floating point.
  if (x.size() == y.size() && std::equal(x.data(), x.data() + x.size(), y.data()))
    return 1.0;
  const double e = std::abs(cumulative_return(x) - cumulative_return(y));
  const double t = std::clamp(x.dot(y) / (nx * ny), -1.0, 1.0);
  const double s = cfg.w / (1.0 + e) + (1.0 - cfg.w) * t;
  return std::min(s, 1.0);  // mathematically <= 1; guards the last ulp
}

struct SimilarityMatrix {
  std::vector<std::string> labels;  // optional, used for CSV headers
  Eigen::MatrixXd values;

  Eigen::Index size() const { return values.rows(); }
};

inline SimilarityMatrix similarity_matrix(const std::vector<ReturnSeries>& series,
                                          const SimilarityConfig& cfg = {},
                                          std::vector<std::string> labels = {}) {
  const Eigen::Index n = static_cast<Eigen::Index>(series.size());
  if (n < 2) throw std::invalid_argument("similarity_matrix: need at least 2 series");
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != n)
    throw std::invalid_argument("similarity_matrix: label count mismatch");

  // Surface every degenerate input at once instead of failing one at a time.
  std::string degenerate;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (series[static_cast<std::size_t>(i)].size() == 0 ||
        series[static_cast<std::size_t>(i)].norm() == 0.0) {
      if (!degenerate.empty()) degenerate += ", ";
      degenerate += labels.empty() ? "#" + std::to_string(i)
                                   : labels[static_cast<std::size_t>(i)];
    }
  }
  if (!degenerate.empty())
    throw std::invalid_argument("similarity_matrix: zero-norm return series: " + degenerate);

  SimilarityMatrix m;
  m.labels = std::move(labels);
  m.values.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m.values(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double s = sim(series[static_cast<std::size_t>(i)],
                           series[static_cast<std::size_t>(j)], cfg);
      m.values(i, j) = s;
      m.values(j, i) = s;
    }
  }
  return m;
}

// Square CSV with a leading label column mirroring the header.
inline void write_csv(const SimilarityMatrix& m, std::ostream& out) {
  const Eigen::Index n = m.size();
  out << "label";
  for (Eigen::Index j = 0; j < n; ++j)
    out << ',' << (m.labels.empty() ? "#" + std::to_string(j)
                                    : m.labels[static_cast<std::size_t>(j)]);
  out << '\n';
  for (Eigen::Index i = 0; i < n; ++i) {
    out << (m.labels.empty() ? "#" + std::to_string(i)
                             : m.labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < n; ++j) out << ',' << format_double(m.values(i, j));
    out << '\n';
  }
}

}  // namespace pathmv
