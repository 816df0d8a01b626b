#pragma once

// Gaussian holdings policy: the closed-form optimizer of the entropy-regularized
// quadratic Hamiltonian, plus its moments, entropy cost, and sampling.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "pathmv/market_data.hpp"
#include "pathmv/rng.hpp"

namespace pathmv {

struct GaussianPolicy {
  Eigen::VectorXd mean;  // dollar holdings
  Eigen::MatrixXd cov;
  Eigen::MatrixXd chol;  // lower triangular, chol * chol^T = cov

  int d() const { return static_cast<int>(mean.size()); }
};

// Builds a policy from (mean, cov), factoring cov once for sampling and
// entropy. Throws if cov is not positive definite.
inline GaussianPolicy make_policy(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size())
    throw std::invalid_argument("make_policy: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("make_policy: covariance is not positive definite");
  GaussianPolicy pol;
  pol.mean = std::move(mean);
  pol.cov = std::move(cov);
  pol.chol = llt.matrixL();
  return pol;
}

// Optimal exploratory policy for functional derivatives (dx, dxx) of the value
// functional: with c = max(dxx, eps),
//   mean = -(sigma sigma^T)^{-1} (mu - r e) * dx / c,
//   cov  =  (sigma sigma^T)^{-1} * gamma / c.
// The floor eps keeps the covariance positive definite when the learned
// curvature is non-positive.
inline GaussianPolicy optimal_policy(const ModelParams& params, double dx, double dxx,
                                     double gamma, double eps) {
  if (!(gamma > 0.0)) throw std::invalid_argument("optimal_policy: gamma must be positive");
  if (!(eps > 0.0)) throw std::invalid_argument("optimal_policy: eps must be positive");
  const double c = std::max(dxx, eps);
  Eigen::LLT<Eigen::MatrixXd> llt(params.Sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("optimal_policy: sigma sigma^T is singular");
  const Eigen::VectorXd mean = -llt.solve(params.excess()) * (dx / c);
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(params.d(), params.d()));
  inv = ((inv + inv.transpose()) * 0.5).eval();  // symmetrize solver round-off
  return make_policy(mean, inv * (gamma / c));
}

inline Eigen::VectorXd sample(const GaussianPolicy& pol, Rng& rng) {
  Eigen::VectorXd z(pol.d());
  for (int i = 0; i < pol.d(); ++i) z[i] = rng.normal();
  return pol.mean + pol.chol * z;
}

// Negative differential entropy of the policy: the integrand of the running
// exploration cost, -(d/2) ln(2 pi e) - (1/2) ln det cov.
inline double entropy_cost(const GaussianPolicy& pol) {
  double log_det = 0.0;
  for (int i = 0; i < pol.d(); ++i) log_det += std::log(pol.chol(i, i));
  log_det *= 2.0;
  constexpr double kLog2PiE = 2.8378770664093453;  // ln(2*pi*e)
  return -0.5 * pol.d() * kLog2PiE - 0.5 * log_det;
}

// Log density of the policy at holdings a.
inline double log_pdf(const GaussianPolicy& pol, const Eigen::VectorXd& a) {
  if (a.size() != pol.d()) throw std::invalid_argument("log_pdf: dimension mismatch");
  const Eigen::VectorXd y =
      pol.chol.triangularView<Eigen::Lower>().solve(a - pol.mean);
  double log_det = 0.0;
  for (int i = 0; i < pol.d(); ++i) log_det += std::log(pol.chol(i, i));
  constexpr double kLog2Pi = 1.8378770664093453;  // ln(2*pi)
  return -0.5 * pol.d() * kLog2Pi - log_det - 0.5 * y.squaredNorm();
}

// Drift and squared diffusion of the policy-averaged wealth process:
//   drift  = (mu - r e)^T mean
//   vol_sq = mean^T Sigma mean + Tr(Sigma^T cov)
struct ExploratoryCoeffs {
  double drift = 0.0;
  double vol_sq = 0.0;
};

inline ExploratoryCoeffs exploratory_coeffs(const GaussianPolicy& pol, const ModelParams& params) {
  if (pol.d() != params.d()) throw std::invalid_argument("exploratory_coeffs: dimension mismatch");
  ExploratoryCoeffs out;
  out.drift = params.excess().dot(pol.mean);
  // Tr(A^T B) = sum of elementwise products
  out.vol_sq = pol.mean.dot(params.Sigma * pol.mean) + params.Sigma.cwiseProduct(pol.cov).sum();
  return out;
}

}  // namespace pathmv
