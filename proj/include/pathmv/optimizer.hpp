#pragma once

// Adaptive-moment gradient descent over a flat parameter vector.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace pathmv {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m, v;
  long t = 0;
};

inline void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& g, AdamState& state,
                      const AdamConfig& cfg = {}) {
  if (g.size() != theta.size()) throw std::invalid_argument("adam_step: gradient size mismatch");
  if (state.t == 0) {
    state.m = Eigen::VectorXd::Zero(theta.size());
    state.v = Eigen::VectorXd::Zero(theta.size());
  }
  ++state.t;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * g;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  theta -= (cfg.lr / c1) * state.m.cwiseQuotient(((state.v / c2).cwiseSqrt().array() + cfg.eps).matrix());
}

}  // namespace pathmv
