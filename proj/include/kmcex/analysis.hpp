#pragma once

// Dense error analysis of the KKMCEX estimator at small scale: the regularized
// Nystrom approximation, the bias/variance decomposition of the MSE, the
// eigenvalue bound on K - T and the resulting MSE bound. Also the NMSE metric.
//
// Every routine here materializes the NL x NL kernel; keep NL in the low thousands.

#include "kmcex/common.hpp"
#include "kmcex/sampling.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace kmcex {

template <typename Scalar = double>
struct NystromApprox {
  Matrix<Scalar> t_tilde;
  Scalar mu{};
};

namespace detail {

template <typename Scalar>
void require_dense_kernel(const Matrix<Scalar>& k, const SamplingSet& s) {
  require(k.rows() == k.cols(), "kernel must be square");
  require(k.rows() == s.n_rows() * s.n_cols(), "kernel side must equal N L of the sampling set");
  require(k.allFinite(), "kernel has non-finite entries");
}

template <typename Scalar>
Matrix<Scalar> sampled_columns(const Matrix<Scalar>& k, const SamplingSet& s) {
  Matrix<Scalar> ks(k.rows(), s.size());
  for (Index c = 0; c < s.size(); ++c) ks.col(c) = k.col(s.vec_indices()[static_cast<std::size_t>(c)]);
  return ks;
}

// K S^T (S K S^T + mu I)^{-1}, the linear map from sampled observations to the estimate.
template <typename Scalar>
Matrix<Scalar> estimator_gain(const Matrix<Scalar>& k, const SamplingSet& s, Scalar mu) {
  const Matrix<Scalar> ks = sampled_columns(k, s);
  Matrix<Scalar> b(s.size(), s.size());
  for (Index r = 0; r < s.size(); ++r) b.row(r) = ks.row(s.vec_indices()[static_cast<std::size_t>(r)]);
  b = Scalar(0.5) * (b + b.transpose());
  b.diagonal().array() += mu;
  Eigen::LLT<Matrix<Scalar>> llt(b);
  if (llt.info() != Eigen::Success) throw NumericalError("sampled kernel block is not positive definite");
  return llt.solve(ks.transpose()).transpose();
}

}  // namespace detail

/// T = K S^T (S K S^T + mu I)^{-1} S K.
template <typename Scalar>
NystromApprox<Scalar> regularized_nystrom(const Matrix<Scalar>& k, const SamplingSet& s, double mu) {
  detail::require_mu(mu);
  detail::require_dense_kernel(k, s);
  if (s.empty()) return {Matrix<Scalar>::Zero(k.rows(), k.cols()), static_cast<Scalar>(mu)};
  const Matrix<Scalar> gain = detail::estimator_gain(k, s, static_cast<Scalar>(mu));
  Matrix<Scalar> t = gain * detail::sampled_columns(k, s).transpose();
  t = Scalar(0.5) * (t + t.transpose());
  return {std::move(t), static_cast<Scalar>(mu)};
}

struct MonteCarloOptions {
  Index draws = 100000;
  std::uint64_t seed = 0;
  /// Draws generated per batched matrix product.
  Index batch = 4096;
};

template <typename Scalar = double>
struct MseReport {
  Scalar bias_sq{};
  Scalar variance{};
  Scalar total{};
  std::optional<Scalar> empirical_mse;
  Index draws = 0;
  /// Standard error of empirical_mse.
  Scalar std_error{};
};

/// MSE of the KKMCEX estimate of v = K gamma from noisy samples S v + e, e ~ N(0, nu_sq I):
///   bias_sq  = ||(K - T) gamma||^2
///   variance = nu_sq / mu^2 * Tr((K - T)^2 S^T S).
/// With `mc` set, also averages the squared error of the estimator over seeded noise draws.
template <typename Scalar>
MseReport<Scalar> mse_decomposition(const Matrix<Scalar>& k, const SamplingSet& s, const Vector<Scalar>& gamma,
                                    double mu, double nu_sq, std::optional<MonteCarloOptions> mc = std::nullopt) {
  detail::require_mu(mu);
  detail::require(std::isfinite(nu_sq) && nu_sq >= 0.0, "mse_decomposition: noise variance must be nonnegative");
  detail::require_dense_kernel(k, s);
  detail::require(gamma.size() == k.rows(), "mse_decomposition: gamma length must equal the kernel side");

  const Scalar m = static_cast<Scalar>(mu);
  const Matrix<Scalar> gap = k - regularized_nystrom(k, s, mu).t_tilde;
  MseReport<Scalar> report;
  report.bias_sq = (gap * gamma).squaredNorm();
  Scalar trace = 0;
  for (Index v : s.vec_indices()) trace += gap.col(v).squaredNorm();
  report.variance = static_cast<Scalar>(nu_sq) / (m * m) * trace;
  report.total = report.bias_sq + report.variance;

  if (mc) {
    detail::require(mc->draws >= 2, "mse_decomposition: Monte Carlo needs at least two draws");
    detail::require(mc->batch >= 1, "mse_decomposition: Monte Carlo batch must be positive");
    const Vector<Scalar> truth = k * gamma;
    Vector<Scalar> bias = -truth;
    Matrix<Scalar> gain;
    if (!s.empty()) {
      gain = detail::estimator_gain(k, s, m);
      Vector<Scalar> sampled(s.size());
      for (Index r = 0; r < s.size(); ++r) sampled(r) = truth(s.vec_indices()[static_cast<std::size_t>(r)]);
      bias += gain * sampled;
    }
    std::mt19937_64 rng(mc->seed);
    const Scalar nu = std::sqrt(static_cast<Scalar>(nu_sq));
    // Welford accumulation of the per-draw squared error.
    double mean = 0.0;
    double m2 = 0.0;
    Index seen = 0;
    while (seen < mc->draws) {
      const Index batch = std::min(mc->batch, mc->draws - seen);
      Matrix<Scalar> err = bias.replicate(1, batch);
      if (!s.empty()) err.noalias() += gain * (nu * standard_normal_matrix<Scalar>(s.size(), batch, rng));
      const Vector<Scalar> sq = err.colwise().squaredNorm().transpose();
      for (Index b = 0; b < batch; ++b) {
        ++seen;
        const double x = static_cast<double>(sq(b));
        const double delta = x - mean;
        mean += delta / static_cast<double>(seen);
        m2 += delta * (x - mean);
      }
    }
    report.empirical_mse = static_cast<Scalar>(mean);
    report.draws = seen;
    report.std_error = static_cast<Scalar>(std::sqrt(m2 / static_cast<double>(seen - 1) / static_cast<double>(seen)));
  }
  return report;
}

/// gamma_tilde = L^T gamma with L the eigenvectors of K - T in ascending eigenvalue order.
template <typename Scalar>
Vector<Scalar> gamma_tilde(const Matrix<Scalar>& k, const Matrix<Scalar>& t_tilde, const Vector<Scalar>& gamma) {
  detail::require(k.rows() == k.cols() && t_tilde.rows() == k.rows() && t_tilde.cols() == k.cols(),
                  "gamma_tilde: kernel and approximation shapes differ");
  detail::require(gamma.size() == k.rows(), "gamma_tilde: gamma length must equal the kernel side");
  const Matrix<Scalar> gap = k - t_tilde;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(Scalar(0.5) * (gap + gap.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("gamma_tilde: eigendecomposition failed");
  return eig.eigenvectors().transpose() * gamma;
}

template <typename Scalar = double>
struct BoundInputs {
  Scalar sigma_max{};
  Vector<Scalar> gamma_tilde;
  Index s_count = 0;
  Scalar mu{};
  Scalar nu_sq{};
};

namespace detail {

// Largest eigenvalue of a nonsingular kernel; refuses singular ones.
template <typename Scalar>
Scalar nonsingular_sigma_max(const Matrix<Scalar>& k) {
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(k, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("kernel eigendecomposition failed");
  const Scalar lo = eig.eigenvalues().minCoeff();
  const Scalar hi = eig.eigenvalues().maxCoeff();
  require(hi > Scalar(0) && lo > Scalar(k.rows()) * std::numeric_limits<Scalar>::epsilon() * hi,
          "the MSE bound requires a nonsingular kernel");
  return hi;
}

}  // namespace detail

template <typename Scalar>
BoundInputs<Scalar> bound_inputs(const Matrix<Scalar>& k, const SamplingSet& s, const Vector<Scalar>& gamma, double mu,
                                 double nu_sq) {
  detail::require_mu(mu);
  detail::require(std::isfinite(nu_sq) && nu_sq >= 0.0, "bound_inputs: noise variance must be nonnegative");
  detail::require_dense_kernel(k, s);
  const Scalar sigma = detail::nonsingular_sigma_max(k);
  const NystromApprox<Scalar> t = regularized_nystrom(k, s, mu);
  return {sigma, gamma_tilde(k, t.t_tilde, gamma), s.size(), static_cast<Scalar>(mu), static_cast<Scalar>(nu_sq)};
}

/// mu^2 sigma^2/(sigma+mu)^2 sum_{i<=S} gt_i^2 + sigma^2 sum_{i>S} gt_i^2 + S nu^2 sigma^2 / mu^2.
template <typename Scalar>
Scalar mse_bound(const BoundInputs<Scalar>& in) {
  detail::require(in.sigma_max > Scalar(0), "mse_bound: sigma_max must be positive");
  detail::require(in.mu > Scalar(0), "mse_bound: mu must be positive");
  detail::require(in.s_count >= 0 && in.s_count <= in.gamma_tilde.size(), "mse_bound: S must lie in [0, NL]");
  const Scalar sigma = in.sigma_max;
  const Scalar mu = in.mu;
  const Index s = in.s_count;
  const Scalar shrink = mu * sigma / (sigma + mu);
  const Scalar head = in.gamma_tilde.head(s).squaredNorm();
  const Scalar tail = in.gamma_tilde.tail(in.gamma_tilde.size() - s).squaredNorm();
  return shrink * shrink * head + sigma * sigma * tail +
         static_cast<Scalar>(s) * in.nu_sq * sigma * sigma / (mu * mu);
}

template <typename Scalar = double>
struct EigBoundReport {
  bool passed = false;
  /// min_k (bound_k - lambda_k); negative means a violation.
  Scalar worst_margin{};
  Vector<Scalar> eigenvalues;  // ascending, of K - T
  Vector<Scalar> bound;        // ascending diagonal bound
};

/// Sorted-eigenvalue check of K - T <= diag(mu sigma/(sigma+mu) on S coordinates, sigma elsewhere).
template <typename Scalar>
EigBoundReport<Scalar> eig_bound_check(const Matrix<Scalar>& k, const SamplingSet& s, double mu,
                                       Scalar slack = Scalar(1e-10)) {
  detail::require_mu(mu);
  detail::require_dense_kernel(k, s);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> keig(k, Eigen::EigenvaluesOnly);
  if (keig.info() != Eigen::Success) throw NumericalError("eig_bound_check: eigendecomposition failed");
  const Scalar sigma = keig.eigenvalues().maxCoeff();
  const Scalar m = static_cast<Scalar>(mu);

  const Matrix<Scalar> gap = k - regularized_nystrom(k, s, mu).t_tilde;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> geig(Scalar(0.5) * (gap + gap.transpose()), Eigen::EigenvaluesOnly);
  if (geig.info() != Eigen::Success) throw NumericalError("eig_bound_check: eigendecomposition failed");

  EigBoundReport<Scalar> report;
  report.eigenvalues = geig.eigenvalues();
  report.bound = Vector<Scalar>::Constant(k.rows(), sigma);
  report.bound.head(s.size()).setConstant(m * sigma / (sigma + m));
  report.worst_margin = (report.bound - report.eigenvalues).minCoeff();
  report.passed = report.worst_margin >= -slack;
  return report;
}

/// Mean of ||F_hat - F||_F^2 / ||F||_F^2 over the estimates.
template <typename Scalar>
Scalar nmse(const std::vector<Matrix<Scalar>>& estimates, const Matrix<Scalar>& truth) {
  detail::require(!estimates.empty(), "nmse: no estimates");
  const Scalar denom = truth.squaredNorm();
  detail::require(denom > Scalar(0), "nmse: truth matrix is zero");
  Scalar acc = 0;
  for (const auto& est : estimates) {
    detail::require(est.rows() == truth.rows() && est.cols() == truth.cols(), "nmse: estimate shape differs from truth");
    acc += (est - truth).squaredNorm() / denom;
  }
  return acc / static_cast<Scalar>(estimates.size());
}

template <typename Scalar>
Scalar nmse(const Matrix<Scalar>& estimate, const Matrix<Scalar>& truth) {
  return nmse(std::vector<Matrix<Scalar>>{estimate}, truth);
}

}  // namespace kmcex
