#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pathmv/rng.hpp"

// Asset clustering by simulated annealing over slot assignments.
//
// A partition maps each asset to one of k_max slots; empty slots are fine,
// but fewer than two nonempty clusters is not a clustering. The energy of a
// partition under a similarity matrix S is
//
//     E = sum over nonempty clusters [ 1 - kappa/(K-1) * sum of pairwise sims ]
//
// where K is the number of nonempty clusters and the inner sum runs over
// unordered distinct pairs inside the cluster (singletons contribute exactly
// 1). Annealing proposes single-asset moves, accepts downhill moves always
// and uphill moves with probability exp(-dE/T), and cools geometrically from
// T0 until the temperature falls below Tf. The best partition seen anywhere
// along the walk is returned.

namespace pathmv {

struct Partition {
  std::vector<int> assignment;  // asset -> slot in [0, k_max)
  int k_max = 25;

  int n() const { return static_cast<int>(assignment.size()); }

  int cluster_count() const {
    std::vector<char> seen(static_cast<std::size_t>(k_max), 0);
    int k = 0;
    for (int s : assignment) {
      if (s < 0 || s >= k_max) throw std::invalid_argument("Partition: slot out of range");
      if (!seen[static_cast<std::size_t>(s)]) {
        seen[static_cast<std::size_t>(s)] = 1;
        ++k;
      }
    }
    return k;
  }

  // Nonempty clusters in slot order; members in ascending asset order.
  std::vector<std::vector<int>> groups() const {
    std::vector<std::vector<int>> by_slot(static_cast<std::size_t>(k_max));
    for (int i = 0; i < n(); ++i)
      by_slot[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])].push_back(i);
    std::vector<std::vector<int>> out;
    for (auto& g : by_slot)
      if (!g.empty()) out.push_back(std::move(g));
    return out;
  }
};

struct AnnealConfig {
  double T0 = 100.0;
  double Tf = 0.1;
  double alpha = 0.99;
  double kappa = 1e-4;
  int k_max = 25;
  int restarts = 100;
  std::uint64_t seed = 0;
};

inline void validate_anneal_config(const AnnealConfig& cfg) {
  if (!(cfg.T0 > cfg.Tf && cfg.Tf > 0.0))
    throw std::invalid_argument("anneal: need T0 > Tf > 0");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    throw std::invalid_argument("anneal: need 0 < alpha < 1");
  if (cfg.k_max < 2) throw std::invalid_argument("anneal: k_max must be >= 2");
  if (cfg.kappa < 0.0) throw std::invalid_argument("anneal: kappa must be >= 0");
  if (cfg.restarts < 1) throw std::invalid_argument("anneal: restarts must be >= 1");
}

inline double energy(const Partition& p, const Eigen::MatrixXd& S, double kappa) {
  const int n = p.n();
  if (S.rows() != n || S.cols() != n)
    throw std::invalid_argument("energy: similarity matrix size mismatch");
  const int K = p.cluster_count();
  if (K < 2) throw std::invalid_argument("energy: fewer than 2 clusters");
  double pair_mass = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (p.assignment[static_cast<std::size_t>(i)] == p.assignment[static_cast<std::size_t>(j)])
        pair_mass += S(i, j);
  return static_cast<double>(K) - kappa * pair_mass / static_cast<double>(K - 1);
}

namespace detail {

struct Move {
  int asset;
  int from;
  int to;
};

// Uniform over (asset, target != current) pairs, conditioned on the move
// leaving at least two nonempty clusters. Bounded redraws, then an error.
inline Move propose_move(const std::vector<int>& assignment,
                         const std::vector<int>& counts, int cluster_count, int k_max,
                         Rng& rng) {
  const int n = static_cast<int>(assignment.size());
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const int asset = static_cast<int>(rng.uniform_below(static_cast<std::size_t>(n)));
    const int cur = assignment[static_cast<std::size_t>(asset)];
    int tgt = static_cast<int>(rng.uniform_below(static_cast<std::size_t>(k_max - 1)));
    if (tgt >= cur) ++tgt;
    const int k_after = cluster_count -
                        (counts[static_cast<std::size_t>(cur)] == 1 ? 1 : 0) +
                        (counts[static_cast<std::size_t>(tgt)] == 0 ? 1 : 0);
    if (k_after >= 2) return {asset, cur, tgt};
  }
  throw std::runtime_error("perturb: no legal move found after bounded retries");
}

inline std::vector<int> slot_counts(const Partition& p) {
  std::vector<int> counts(static_cast<std::size_t>(p.k_max), 0);
  for (int s : p.assignment) ++counts[static_cast<std::size_t>(s)];
  return counts;
}

}  // namespace detail

// One uniformly chosen legal single-asset move applied to a copy.
inline Partition perturb(const Partition& p, Rng& rng) {
  if (p.n() < 2) throw std::invalid_argument("perturb: need at least 2 assets");
  if (p.k_max < 2) throw std::invalid_argument("perturb: k_max must be >= 2");
  auto counts = detail::slot_counts(p);
  const auto move = detail::propose_move(p.assignment, counts, p.cluster_count(), p.k_max, rng);
  Partition q = p;
  q.assignment[static_cast<std::size_t>(move.asset)] = move.to;
  return q;
}

// Metropolis rule: downhill always, uphill with probability exp(-dE/T).
inline bool anneal_accept(double dE, double T, Rng& rng) {
  if (dE < 0.0) return true;
  return rng.uniform() < std::exp(-dE / T);
}

struct AnnealResult {
  Partition best;
  double best_energy = 0.0;
  std::vector<double> energy_trace;  // accepted-state energy after each step
  std::vector<double> best_trace;    // best-seen energy after each step
  int steps = 0;
  int restart_index = 0;
  std::vector<double> restart_energies;  // filled by best_of_restarts
};

// Single annealing run. The walk starts from all assets in one cluster with
// one random asset moved out (|C| = 1 is not a valid state). Energy deltas
// are tracked incrementally; the returned best energy is recomputed exactly.
inline AnnealResult anneal(const Eigen::MatrixXd& S, const AnnealConfig& cfg,
                           std::uint64_t seed) {
  validate_anneal_config(cfg);
  const int n = static_cast<int>(S.rows());
  if (S.rows() != S.cols()) throw std::invalid_argument("anneal: S must be square");
  if (n < 2) throw std::invalid_argument("anneal: need at least 2 assets");

  Rng rng(seed);

  Partition p;
  p.k_max = cfg.k_max;
  p.assignment.assign(static_cast<std::size_t>(n), 0);
  const int first_out = static_cast<int>(rng.uniform_below(static_cast<std::size_t>(n)));
  const int first_slot = 1 + static_cast<int>(rng.uniform_below(static_cast<std::size_t>(cfg.k_max - 1)));
  p.assignment[static_cast<std::size_t>(first_out)] = first_slot;

  auto counts = detail::slot_counts(p);
  int K = p.cluster_count();
  double pair_mass = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (p.assignment[static_cast<std::size_t>(i)] == p.assignment[static_cast<std::size_t>(j)])
        pair_mass += S(i, j);

  auto energy_of = [&](int k, double mass) {
    return static_cast<double>(k) - cfg.kappa * mass / static_cast<double>(k - 1);
  };

  double E = energy_of(K, pair_mass);
  AnnealResult result;
  result.best = p;
  double best_E = E;

  for (double T = cfg.T0; T >= cfg.Tf; T *= cfg.alpha) {
    const auto move = detail::propose_move(p.assignment, counts, K, cfg.k_max, rng);

    double sum_src = 0.0, sum_tgt = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == move.asset) continue;
      const int slot = p.assignment[static_cast<std::size_t>(j)];
      if (slot == move.from) sum_src += S(move.asset, j);
      if (slot == move.to) sum_tgt += S(move.asset, j);
    }
    const int K_new = K - (counts[static_cast<std::size_t>(move.from)] == 1 ? 1 : 0) +
                      (counts[static_cast<std::size_t>(move.to)] == 0 ? 1 : 0);
    const double mass_new = pair_mass - sum_src + sum_tgt;
    const double E_new = energy_of(K_new, mass_new);

    if (anneal_accept(E_new - E, T, rng)) {
      p.assignment[static_cast<std::size_t>(move.asset)] = move.to;
      --counts[static_cast<std::size_t>(move.from)];
      ++counts[static_cast<std::size_t>(move.to)];
      K = K_new;
      pair_mass = mass_new;
      E = E_new;
      if (E < best_E) {
        best_E = E;
        result.best = p;
      }
    }
    result.energy_trace.push_back(E);
    result.best_trace.push_back(best_E);
    ++result.steps;
  }

  result.best_energy = energy(result.best, S, cfg.kappa);
  return result;
}

// Independent restarts from derived sub-seeds; lowest energy wins, ties go to
// the lowest restart index.
inline AnnealResult best_of_restarts(const Eigen::MatrixXd& S, const AnnealConfig& cfg) {
  validate_anneal_config(cfg);
  AnnealResult best;
  std::vector<double> energies;
  energies.reserve(static_cast<std::size_t>(cfg.restarts));
  for (int i = 0; i < cfg.restarts; ++i) {
    AnnealResult r = anneal(S, cfg, derive_seed(cfg.seed, "restart", static_cast<std::uint64_t>(i)));
    r.restart_index = i;
    energies.push_back(r.best_energy);
    if (i == 0 || r.best_energy < best.best_energy) best = std::move(r);
  }
  best.restart_energies = std::move(energies);
  return best;
}

// One uniformly chosen member per nonempty cluster, in slot order.
inline std::vector<int> select_representatives(const Partition& p, Rng& rng) {
  std::vector<int> reps;
  for (const auto& g : p.groups())
    reps.push_back(g[rng.uniform_below(g.size())]);
  return reps;
}

}  // namespace pathmv
