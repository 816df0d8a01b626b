#pragma once

// Market simulation: multi-asset GBM prices, the classical controlled wealth
// step, and the exploratory (policy-averaged) wealth process.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "pathmv/market_data.hpp"
#include "pathmv/path_grid.hpp"
#include "pathmv/policy.hpp"
#include "pathmv/rng.hpp"

namespace pathmv {

struct SimConfig {
  int N = 1;             // time steps
  double T = 1.0;        // horizon, years
  int M = 1;             // path count
  std::uint64_t seed = 0;

  double dt() const { return T / N; }
};

inline void validate_sim_config(const SimConfig& cfg) {
  if (cfg.N < 1) throw std::invalid_argument("SimConfig: N must be >= 1");
  if (!(cfg.T > 0.0)) throw std::invalid_argument("SimConfig: T must be positive");
  if (cfg.M < 1) throw std::invalid_argument("SimConfig: M must be >= 1");
}

// M price-path matrices, each (N+1) x d, S_0 = 1 per asset. Log-Euler:
//   log S_{k+1} = log S_k + (mu - diag(Sigma)/2) dt + sigma sqrt(dt) Z_k.
// Draws are counter-based on (path, step, asset), so path j is the same
// regardless of how many paths are requested.
inline std::vector<Eigen::MatrixXd> simulate_assets(const ModelParams& params,
                                                    const SimConfig& cfg) {
  validate_sim_config(cfg);
  const int d = static_cast<int>(params.d());
  const double dt = cfg.dt();
  const double sdt = std::sqrt(dt);
  const Eigen::VectorXd drift = (params.mu - 0.5 * params.Sigma.diagonal()) * dt;

  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(cfg.M));
  Eigen::VectorXd z(d), logs(d);
  for (int j = 0; j < cfg.M; ++j) {
    Eigen::MatrixXd path(cfg.N + 1, d);
    path.row(0).setOnes();
    logs.setZero();
    for (int k = 0; k < cfg.N; ++k) {
      for (int a = 0; a < d; ++a)
        z[a] = counter_normal(cfg.seed, static_cast<std::uint64_t>(j),
                              static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(a));
      logs += drift + sdt * (params.sigma * z);
      path.row(k + 1) = logs.array().exp();
    }
    out.push_back(std::move(path));
  }
  return out;
}

// One classical wealth step under dollar holdings a:
//   x' = x + (mu - r e)^T a dt + a^T sigma sqrt(dt) Z.
// Wealth may go negative; there is no bankruptcy constraint.
inline double step_wealth(double x, const Eigen::VectorXd& a, const ModelParams& params,
                          double dt, const Eigen::VectorXd& dW) {
  if (a.size() != params.d() || dW.size() != params.d())
    throw std::invalid_argument("step_wealth: dimension mismatch");
  return x + params.excess().dot(a) * dt + a.dot(params.sigma * dW) * std::sqrt(dt);
}

// One exploratory wealth step under a Gaussian policy with mean m, cov C:
//   x' = x + (mu - r e)^T m dt + m^T sigma sqrt(dt) Z + sqrt(Tr(Sigma^T C)) sqrt(dt) ztilde.
// draws carries d asset shocks followed by the extra exploration shock.
inline double step_exploratory(double x, const GaussianPolicy& pol, const ModelParams& params,
                               double dt, const Eigen::VectorXd& draws) {
  if (pol.d() != params.d()) throw std::invalid_argument("step_exploratory: dimension mismatch");
  if (draws.size() != params.d() + 1)
    throw std::invalid_argument("step_exploratory: needs d+1 draws");
  const double trace = params.Sigma.cwiseProduct(pol.cov).sum();
  if (trace < 0.0) throw std::runtime_error("step_exploratory: covariance is not positive definite");
  const double sdt = std::sqrt(dt);
  const Eigen::VectorXd z = draws.head(params.d());
  return x + params.excess().dot(pol.mean) * dt + pol.mean.dot(params.sigma * z) * sdt +
         std::sqrt(trace) * sdt * draws[params.d()];
}

using PolicyFn = std::function<GaussianPolicy(const PathGrid&)>;

// Extends x0_path to the horizon cfg.T along M independent exploratory paths.
// The policy is re-evaluated on the growing prefix before every step
// (piecewise-constant between grid points). Draw indexing is (path,
// transition, channel) with channels 0..d-1 the asset shocks and channel d the
// exploration shock, so path j is identical regardless of M.
inline std::vector<PathGrid> simulate_exploratory_paths(const PathGrid& x0_path,
                                                        const PolicyFn& policy_fn,
                                                        const ModelParams& params,
                                                        const SimConfig& cfg) {
  validate_sim_config(cfg);
  const double dt = x0_path.dt;
  if (std::abs(dt - cfg.dt()) > 1e-12 * std::max(1.0, dt))
    throw std::invalid_argument("simulate_exploratory_paths: path dt must equal T/N");
  const double span = cfg.T - x0_path.tip_time();
  const int steps = static_cast<int>(std::llround(span / dt));
  if (steps < 0 || std::abs(span - steps * dt) > 1e-9 * std::max(1.0, cfg.T))
    throw std::invalid_argument("simulate_exploratory_paths: horizon is not on the path grid");

  const int d = static_cast<int>(params.d());
  std::vector<PathGrid> out;
  out.reserve(static_cast<std::size_t>(cfg.M));
  Eigen::VectorXd draws(d + 1);
  for (int j = 0; j < cfg.M; ++j) {
    PathGrid path = x0_path;
    for (int s = 0; s < steps; ++s) {
      const GaussianPolicy pol = policy_fn(path);
      const std::uint64_t transition = path.size() - 1;
      for (int c = 0; c <= d; ++c)
        draws[c] = counter_normal(cfg.seed, static_cast<std::uint64_t>(j), transition,
                                  static_cast<std::uint64_t>(c));
      path.append(step_exploratory(path.tip(), pol, params, dt, draws));
    }
    out.push_back(std::move(path));
  }
  return out;
}

}  // namespace pathmv
