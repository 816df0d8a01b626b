#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

namespace pathmv {

// A piecewise-constant record of one scalar path on a uniform time grid:
// values[i] observed at time t0 + i*dt. Uniform spacing is guaranteed by
// construction (only t0, dt and the values are stored).
struct PathGrid {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<double> values;

  PathGrid() = default;
  PathGrid(std::vector<double> vals, double dt_, double t0_ = 0.0)
      : t0(t0_), dt(dt_), values(std::move(vals)) {
    if (values.empty()) throw std::invalid_argument("PathGrid: needs at least one point");
    if (!(dt > 0.0)) throw std::invalid_argument("PathGrid: dt must be positive");
  }

  std::size_t size() const { return values.size(); }
  double time(std::size_t i) const { return t0 + dt * static_cast<double>(i); }
  double tip() const { return values.back(); }
  double tip_time() const { return time(values.size() - 1); }

  void append(double v) { values.push_back(v); }

  // First n points (n >= 1).
  PathGrid prefix(std::size_t n) const {
    if (n == 0 || n > values.size())
      throw std::invalid_argument("PathGrid::prefix: n out of range");
    return PathGrid(std::vector<double>(values.begin(), values.begin() + n), dt, t0);
  }
};

}  // namespace pathmv
