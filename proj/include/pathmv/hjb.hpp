#pragma once

// Path-dependent HJB machinery: functional-derivative stencils on discretized
// wealth paths, the reduced residual, the training loss with its exact
// gradient, the outer training loop, and a Monte Carlo martingale diagnostic.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pathmv/market.hpp"
#include "pathmv/market_data.hpp"
#include "pathmv/nn.hpp"
#include "pathmv/optimizer.hpp"
#include "pathmv/path_grid.hpp"
#include "pathmv/policy.hpp"
#include "pathmv/rng.hpp"

namespace pathmv {

// ------------------------------------------------------------- extensions

// Copy with the final value bumped by h; the rest of the path is untouched.
inline PathGrid bump_vertical(const PathGrid& path, double h) {
  PathGrid out = path;
  out.values.back() += h;
  return out;
}

// Copy prolonged by one grid step at the current final value.
inline PathGrid extend_flat(const PathGrid& path) {
  PathGrid out = path;
  out.values.push_back(out.values.back());
  return out;
}

// ---------------------------------------------------------------- stencils

struct StencilConfig {
  double h = 0.01;   // vertical bump, wealth units
  double dt = 0.0;   // flat-extension step; <= 0 means the path's own grid dt
};

struct Derivs {
  double dt_u = 0.0;   // time derivative under flat extension
  double dx_u = 0.0;   // first spatial derivative (forward difference)
  double dxx_u = 0.0;  // second spatial derivative (central)
};

namespace detail {

inline double stencil_dt(const StencilConfig& cfg, const PathGrid& path) {
  if (!(cfg.h > 0.0)) throw std::invalid_argument("StencilConfig: h must be positive");
  if (cfg.dt > 0.0 && std::abs(cfg.dt - path.dt) > 1e-12 * std::max(1.0, path.dt))
    throw std::invalid_argument("StencilConfig: dt must equal the path grid dt");
  return path.dt;
}

}  // namespace detail

// Stencil on an arbitrary path functional (used to validate against stub
// functionals with known derivatives).
template <class F>
Derivs func_derivs_fn(const PathGrid& path, F&& u, const StencilConfig& cfg) {
  const double dt = detail::stencil_dt(cfg, path);
  const double u0 = u(path);
  const double up = u(bump_vertical(path, cfg.h));
  const double um = u(bump_vertical(path, -cfg.h));
  const double uf = u(extend_flat(path));
  Derivs d;
  d.dt_u = (uf - u0) / dt;
  d.dx_u = (up - u0) / cfg.h;
  d.dxx_u = (up - 2.0 * u0 + um) / (cfg.h * cfg.h);
  return d;
}

// Stencil on the network functional. One LSTM pass serves all four
// evaluations: the bump leaves the strict prefix (hence a_{k-1}) unchanged,
// and the flat extension's summary is exactly a_k.
inline Derivs func_derivs(const PathGrid& path, const Network& net, const StencilConfig& cfg) {
  const double dt = detail::stencil_dt(cfg, path);
  const std::size_t k = path.size() - 1;
  LstmCache cache;
  lstm_forward(path.values, path.values.size(), net, cache);
  const Eigen::VectorXd a_prev =
      k >= 1 ? Eigen::VectorXd(cache.hh.col(static_cast<int>(k) - 1))
             : Eigen::VectorXd(Eigen::VectorXd::Zero(net.hidden()));
  const Eigen::VectorXd a_tip = cache.hh.col(static_cast<int>(k));

  const double t = path.time(k);
  const double x = path.values[k];
  const double u0 = head_forward(head_input(t, x, a_prev, net), net, nullptr);
  const double up = head_forward(head_input(t, x + cfg.h, a_prev, net), net, nullptr);
  const double um = head_forward(head_input(t, x - cfg.h, a_prev, net), net, nullptr);
  const double uf = head_forward(head_input(path.time(k + 1), x, a_tip, net), net, nullptr);
  Derivs d;
  d.dt_u = (uf - u0) / dt;
  d.dx_u = (up - u0) / cfg.h;
  d.dxx_u = (up - 2.0 * u0 + um) / (cfg.h * cfg.h);
  return d;
}

// ---------------------------------------------------------------- residual

// Market-dependent coefficients of the reduced equation.
struct HjbConstants {
  double A = 0.0;  // |sigma^{-1}(mu - r e)|^2 / 2
  double B = 0.0;  // (gamma/2) [d - d ln(2 pi e gamma) + ln det(sigma sigma^T)]
  double C = 0.0;  // gamma d / 2
};

inline HjbConstants hjb_constants(const ModelParams& params, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("hjb_constants: gamma must be positive");
  const auto d = params.d();
  for (Eigen::Index i = 0; i < d; ++i)
    if (!(params.sigma(i, i) > 0.0))
      throw std::runtime_error("hjb_constants: sigma is singular");
  const Eigen::VectorXd y =
      params.sigma.triangularView<Eigen::Lower>().solve(params.excess());
  double log_det = 0.0;  // ln det(sigma sigma^T) = 2 sum ln diag(sigma)
  for (Eigen::Index i = 0; i < d; ++i) log_det += std::log(params.sigma(i, i));
  log_det *= 2.0;
  constexpr double kLog2PiE = 2.8378770664093453;  // ln(2*pi*e)
  HjbConstants k;
  k.A = 0.5 * y.squaredNorm();
  k.B = 0.5 * gamma *
        (static_cast<double>(d) - static_cast<double>(d) * (kLog2PiE + std::log(gamma)) + log_det);
  k.C = 0.5 * gamma * static_cast<double>(d);
  return k;
}

// Reduced-equation residual from precomputed stencil values. The curvature
// floor keeps the log defined; *floored reports whether it engaged.
inline double residual_from_derivs(const Derivs& d, const HjbConstants& k, double eps,
                                   bool* floored = nullptr) {
  if (!(eps > 0.0)) throw std::invalid_argument("residual_from_derivs: eps must be positive");
  const bool hit = d.dxx_u < eps;
  if (floored) *floored = hit;
  const double c = hit ? eps : d.dxx_u;
  return d.dt_u - k.A * d.dx_u * d.dx_u / c + k.C * std::log(c) + k.B;
}

// ------------------------------------------------------------- solver core

struct SolverConfig {
  double gamma = 0.01;        // exploration temperature
  double lagrange_w = 1.0;    // initial multiplier for E[x_T] = z
  double z = 1.05;            // target expected terminal wealth
  int M = 200;                // training paths
  int N = 20;                 // grid intervals over [0, T]
  double T = 1.0;             // horizon, years
  double h = 0.01;            // stencil bump
  double terminal_weight = 1.0;
  double eps = 1e-6;          // curvature floor
  int outer_rounds = 10;      // path regeneration rounds
  int epochs = 100;           // full-batch optimizer sweeps per round
  double w_step = 0.05;       // multiplier update step
  double w_halfwidth = 5.0;   // multiplier bracket half-width around z
  AdamConfig adam;
  NetConfig net;              // t_scale is pinned to T by train()
};

inline void validate_solver_config(const SolverConfig& cfg) {
  if (!(cfg.gamma > 0.0)) throw std::invalid_argument("SolverConfig: gamma must be positive");
  if (cfg.M < 1 || cfg.N < 1) throw std::invalid_argument("SolverConfig: M and N must be >= 1");
  if (!(cfg.T > 0.0)) throw std::invalid_argument("SolverConfig: T must be positive");
  if (!(cfg.h > 0.0)) throw std::invalid_argument("SolverConfig: h must be positive");
  if (cfg.terminal_weight < 0.0)
    throw std::invalid_argument("SolverConfig: terminal_weight must be >= 0");
  if (!(cfg.eps > 0.0)) throw std::invalid_argument("SolverConfig: eps must be positive");
  if (cfg.outer_rounds < 1 || cfg.epochs < 1)
    throw std::invalid_argument("SolverConfig: outer_rounds and epochs must be >= 1");
}

inline double residual(const PathGrid& path, const Network& net, const HjbConstants& k,
                       const SolverConfig& cfg, bool* floored = nullptr) {
  return residual_from_derivs(func_derivs(path, net, StencilConfig{cfg.h, 0.0}), k, cfg.eps,
                              floored);
}

struct LossStats {
  long evals = 0;    // residual evaluations
  long floored = 0;  // evaluations where the curvature floor engaged
};

namespace detail {

// Shared assembly for the loss and its gradient. Per path: one LSTM pass,
// 4N+1 head evaluations (base, two bumps, and flat per prefix, plus the
// terminal), immediate backward accumulation, then one BPTT sweep.
inline double hjb_loss_impl(const std::vector<PathGrid>& paths, const Network& net,
                            const HjbConstants& kc, const SolverConfig& cfg,
                            Eigen::VectorXd* grad, LossStats* stats) {
  validate_solver_config(cfg);
  if (paths.empty()) throw std::invalid_argument("hjb_loss: needs at least one path");
  const int N = cfg.N;
  const std::size_t want = static_cast<std::size_t>(N) + 1;
  for (const auto& p : paths)
    if (p.size() != want)
      throw std::invalid_argument("hjb_loss: every path must have N+1 points");
  const double M = static_cast<double>(paths.size());
  const double dt = paths.front().dt;
  const double h = cfg.h;
  const double w = cfg.lagrange_w;

  if (grad) {
    if (grad->size() != net.param_count()) grad->setZero(net.param_count());
    else grad->setZero();
  }

  double loss = 0.0;
  LstmCache lstm;
  HeadCache c0, cp, cm, cf;
  Eigen::VectorXd dinput;
  Eigen::MatrixXd dh(net.hidden(), N);
  const Eigen::VectorXd a_zero = Eigen::VectorXd::Zero(net.hidden());

  for (const auto& path : paths) {
    lstm_forward(path.values, static_cast<std::size_t>(N), net, lstm);
    dh.setZero();

    for (int i = 0; i < N; ++i) {
      const Eigen::VectorXd a_prev = i >= 1 ? Eigen::VectorXd(lstm.hh.col(i - 1)) : a_zero;
      const double t = path.time(static_cast<std::size_t>(i));
      const double x = path.values[static_cast<std::size_t>(i)];
      const double u0 = head_forward(head_input(t, x, a_prev, net), net, grad ? &c0 : nullptr);
      const double up = head_forward(head_input(t, x + h, a_prev, net), net, grad ? &cp : nullptr);
      const double um = head_forward(head_input(t, x - h, a_prev, net), net, grad ? &cm : nullptr);
      const double uf = head_forward(
          head_input(path.time(static_cast<std::size_t>(i) + 1), x, lstm.hh.col(i), net), net,
          grad ? &cf : nullptr);

      Derivs dv;
      dv.dt_u = (uf - u0) / dt;
      dv.dx_u = (up - u0) / h;
      dv.dxx_u = (up - 2.0 * u0 + um) / (h * h);
      bool floored = false;
      const double r = residual_from_derivs(dv, kc, cfg.eps, &floored);
      loss += r * r / (M * N);
      if (stats) {
        ++stats->evals;
        if (floored) ++stats->floored;
      }

      if (grad) {
        const double c = floored ? cfg.eps : dv.dxx_u;
        const double dLdr = 2.0 * r / (M * N);
        const double drddx = -2.0 * kc.A * dv.dx_u / c;
        const double drddxx = floored ? 0.0 : kc.A * dv.dx_u * dv.dx_u / (c * c) + kc.C / c;
        const double duf = dLdr / dt;
        const double dup = dLdr * (drddx / h + drddxx / (h * h));
        const double dum = dLdr * (drddxx / (h * h));
        const double du0 = dLdr * (-1.0 / dt - drddx / h - 2.0 * drddxx / (h * h));

        head_backward(c0, net, du0, *grad, &dinput);
        if (i >= 1) dh.col(i - 1) += dinput.tail(net.hidden());
        head_backward(cp, net, dup, *grad, &dinput);
        if (i >= 1) dh.col(i - 1) += dinput.tail(net.hidden());
        head_backward(cm, net, dum, *grad, &dinput);
        if (i >= 1) dh.col(i - 1) += dinput.tail(net.hidden());
        head_backward(cf, net, duf, *grad, &dinput);
        dh.col(i) += dinput.tail(net.hidden());
      }
    }

    // terminal anchor: u at the full path vs (x_T - w)^2 - (w - z)^2
    const double xT = path.values[static_cast<std::size_t>(N)];
    const double uN = head_forward(
        head_input(path.time(static_cast<std::size_t>(N)), xT, lstm.hh.col(N - 1), net), net,
        grad ? &c0 : nullptr);
    const double target = (xT - w) * (xT - w) - (w - cfg.z) * (w - cfg.z);
    loss += cfg.terminal_weight * (uN - target) * (uN - target) / M;
    if (grad) {
      head_backward(c0, net, 2.0 * cfg.terminal_weight * (uN - target) / M, *grad, &dinput);
      dh.col(N - 1) += dinput.tail(net.hidden());
      lstm_backward(lstm, net, dh, *grad);
    }
  }
  return loss;
}

}  // namespace detail

// Training loss: mean squared residual over every strict prefix of every
// path, plus the terminal anchor. cfg.lagrange_w is the multiplier in force.
inline double hjb_loss(const std::vector<PathGrid>& paths, const Network& net,
                       const HjbConstants& kc, const SolverConfig& cfg,
                       LossStats* stats = nullptr) {
  return detail::hjb_loss_impl(paths, net, kc, cfg, nullptr, stats);
}

inline double hjb_loss_grad(const std::vector<PathGrid>& paths, const Network& net,
                            const HjbConstants& kc, const SolverConfig& cfg,
                            Eigen::VectorXd& grad, LossStats* stats = nullptr) {
  return detail::hjb_loss_impl(paths, net, kc, cfg, &grad, stats);
}

// ------------------------------------------------------------- policies

// Exploration-only policy used before any value estimate exists: zero mean,
// covariance (sigma sigma^T)^{-1} gamma (unit curvature).
inline GaussianPolicy bootstrap_policy(const ModelParams& params, const SolverConfig& cfg) {
  return optimal_policy(params, 0.0, 1.0, cfg.gamma, cfg.eps);
}

// Policy induced by the current network at the tip of a path.
inline GaussianPolicy policy_from_network(const PathGrid& path, const Network& net,
                                          const ModelParams& params, const SolverConfig& cfg) {
  const Derivs d = func_derivs(path, net, StencilConfig{cfg.h, 0.0});
  return optimal_policy(params, d.dx_u, d.dxx_u, cfg.gamma, cfg.eps);
}

// Dual-ascent step on the terminal-wealth multiplier, clipped to [lo, hi].
inline double update_lagrange_w(double w, double mean_xT, double z, double step, double lo,
                                double hi) {
  if (lo > hi) throw std::invalid_argument("update_lagrange_w: empty bracket");
  const double next = w - step * (mean_xT - z);
  return std::min(std::max(next, lo), hi);
}

// ------------------------------------------------------------- training

struct TrainResult {
  Network net;
  std::vector<double> loss_curve;     // one entry per epoch, rounds concatenated
  std::vector<double> w_trace;        // multiplier after each round
  std::vector<double> mean_xT_trace;  // ensemble mean terminal wealth per round
  double final_w = 0.0;
  double final_mean_xT = 0.0;
  LossStats total;                   // over the whole run
  LossStats last_epoch;              // final epoch only
};

// Outer loop: regenerate an exploratory path ensemble under the current
// policy (bootstrap on round 0), run full-batch optimizer sweeps, update the
// multiplier from the ensemble's mean terminal wealth. The network's time
// standardization is pinned to the horizon. Passing `warm` copies that
// network's parameters as the starting point instead of a fresh init.
inline TrainResult train(const PathGrid& x0_path, const ModelParams& params,
                         const SolverConfig& cfg, std::uint64_t seed,
                         const Network* warm = nullptr) {
  validate_solver_config(cfg);
  NetConfig nc = cfg.net;
  nc.t_scale = cfg.T;
  TrainResult result{Network(nc), {}, {}, {}, 0.0, 0.0, {}, {}};
  Network& net = result.net;
  if (warm) {
    if (warm->param_count() != net.param_count())
      throw std::invalid_argument("train: warm-start network has a different architecture");
    net.theta = warm->theta;
  } else {
    net.init(derive_seed(seed, "init"));
  }

  const HjbConstants kc = hjb_constants(params, cfg.gamma);
  double w = cfg.lagrange_w;
  AdamState adam;
  Eigen::VectorXd grad(net.param_count());

  for (int round = 0; round < cfg.outer_rounds; ++round) {
    PolicyFn policy_fn;
    if (round == 0) {
      const GaussianPolicy pol = bootstrap_policy(params, cfg);
      policy_fn = [pol](const PathGrid&) { return pol; };
    } else {
      policy_fn = [&net, &params, &cfg](const PathGrid& p) {
        return policy_from_network(p, net, params, cfg);
      };
    }
    SimConfig sim;
    sim.N = cfg.N;
    sim.T = cfg.T;
    sim.M = cfg.M;
    sim.seed = derive_seed(seed, "paths", static_cast<std::uint64_t>(round));
    const std::vector<PathGrid> paths =
        simulate_exploratory_paths(x0_path, policy_fn, params, sim);

    SolverConfig round_cfg = cfg;
    round_cfg.lagrange_w = w;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      LossStats stats;
      const double loss = detail::hjb_loss_impl(paths, net, kc, round_cfg, &grad, &stats);
      if (!std::isfinite(loss))
        throw std::runtime_error(
            "train: loss diverged at round " + std::to_string(round) + ", epoch " +
            std::to_string(epoch) + " (last finite loss " +
            (result.loss_curve.empty() ? std::string("none")
                                       : std::to_string(result.loss_curve.back())) +
            "); reduce the learning rate or the bump size");
      result.loss_curve.push_back(loss);
      result.total.evals += stats.evals;
      result.total.floored += stats.floored;
      if (round == cfg.outer_rounds - 1 && epoch == cfg.epochs - 1) result.last_epoch = stats;
      adam_step(net.theta, grad, adam, cfg.adam);
    }

    double mean_xT = 0.0;
    for (const auto& p : paths) mean_xT += p.tip();
    mean_xT /= static_cast<double>(paths.size());
    result.mean_xT_trace.push_back(mean_xT);
    w = update_lagrange_w(w, mean_xT, cfg.z, cfg.w_step, cfg.z - cfg.w_halfwidth,
                          cfg.z + cfg.w_halfwidth);
    result.w_trace.push_back(w);
    result.final_mean_xT = mean_xT;
  }
  result.final_w = w;
  return result;
}

// ------------------------------------------------------- martingale check

using ValueFn = std::function<double(const PathGrid&)>;

struct MartingaleReport {
  std::vector<double> taus;     // grid times after the start
  std::vector<double> gaps;     // E[Y_tau] - Y_start
  std::vector<double> stderrs;  // standard error of each gap
  double worst_gap = 0.0;
  double worst_stderr = 0.0;
};

// Monte Carlo check that Y_tau = u(path prefix) + gamma * sum f dt is a
// martingale under the evaluated policy, with f the policy's entropy cost.
// Returns the largest-|gap| grid point; at tau = start the gap is 0 exactly
// and is not reported.
inline MartingaleReport martingale_check(const ValueFn& value_fn, const PolicyFn& policy_fn,
                                         const ModelParams& params, const PathGrid& x0_path,
                                         const SimConfig& sim, double gamma) {
  validate_sim_config(sim);
  const double dt = x0_path.dt;
  if (std::abs(dt - sim.dt()) > 1e-12 * std::max(1.0, dt))
    throw std::invalid_argument("martingale_check: path dt must equal T/N");
  const double span = sim.T - x0_path.tip_time();
  const int steps = static_cast<int>(std::llround(span / dt));
  if (steps <= 0 || std::abs(span - steps * dt) > 1e-9 * std::max(1.0, sim.T))
    throw std::invalid_argument("martingale_check: horizon is not on the path grid");

  const double y_start = value_fn(x0_path);
  const int d = static_cast<int>(params.d());
  Eigen::MatrixXd y(sim.M, steps);
  Eigen::VectorXd draws(d + 1);
  for (int j = 0; j < sim.M; ++j) {
    PathGrid path = x0_path;
    double running = 0.0;
    for (int s = 0; s < steps; ++s) {
      const GaussianPolicy pol = policy_fn(path);
      const std::uint64_t transition = path.size() - 1;
      for (int c = 0; c <= d; ++c)
        draws[c] = counter_normal(sim.seed, static_cast<std::uint64_t>(j), transition,
                                  static_cast<std::uint64_t>(c));
      path.append(step_exploratory(path.tip(), pol, params, dt, draws));
      running += gamma * entropy_cost(pol) * dt;
      y(j, s) = value_fn(path) + running;
    }
  }

  MartingaleReport report;
  for (int s = 0; s < steps; ++s) {
    const double mean = y.col(s).mean();
    const double var = (y.col(s).array() - mean).square().sum() / (sim.M - 1);
    const double gap = mean - y_start;
    const double se = std::sqrt(var / sim.M);
    report.taus.push_back(x0_path.tip_time() + dt * (s + 1));
    report.gaps.push_back(gap);
    report.stderrs.push_back(se);
    if (std::abs(gap) > std::abs(report.worst_gap)) {
      report.worst_gap = gap;
      report.worst_stderr = se;
    }
  }
  return report;
}

}  // namespace pathmv
