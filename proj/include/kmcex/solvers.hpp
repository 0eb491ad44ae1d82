#pragma once

// Estimators for matrix completion and extrapolation:
//   * KKMCEX: closed-form Kronecker-kernel ridge regression reduced to an S x S system
//   * RRMCEX: ridge regression on a d-dimensional feature map, d x d system
//   * online RRMCEX: stochastic gradient iterations on the RRMCEX objective
//   * ALS and factor SGD baselines for the (kernel-regularized) factorization model
//
// Objectives carry no 1/2 factor. The online RRMCEX update is
//   xi <- xi - t [phi (phi^T xi - m) + mu xi].

#include "kmcex/common.hpp"
#include "kmcex/kernels.hpp"
#include "kmcex/sampling.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <variant>
#include <vector>

namespace kmcex {

namespace detail {

template <typename Scalar>
void require_finite_observations(const ObservationSet<Scalar>& obs) {
  require(obs.values.allFinite(), "observations contain non-finite values");
}

// Solves (A + mu I) x = b for symmetric A via Cholesky, overwriting A.
template <typename Scalar>
Vector<Scalar> spd_solve_shifted(Matrix<Scalar>& a, Scalar mu, const Vector<Scalar>& b, const char* what) {
  a.diagonal().array() += mu;
  Eigen::LLT<Eigen::Ref<Matrix<Scalar>>> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + ": system is not positive definite");
  return llt.solve(b);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// KKMCEX

template <typename Scalar = double>
struct KkmcexModel {
  std::shared_ptr<const KroneckerKernel<Scalar>> kernel;
  SamplingSet sampling;
  Scalar mu{};
  /// Nonzero part of gamma, in sampling order.
  Vector<Scalar> dual_coeffs;

  /// Full NL coefficient vector; zero off the sampling set.
  [[nodiscard]] Vector<Scalar> full_gamma() const {
    Vector<Scalar> gamma = Vector<Scalar>::Zero(kernel->size());
    for (Index k = 0; k < sampling.size(); ++k) gamma(sampling.vec_indices()[static_cast<std::size_t>(k)]) = dual_coeffs(k);
    return gamma;
  }
};

/// dual_coeffs = (S K_z S^T + mu I)^{-1} m_bar, never forming K_z.
template <typename Scalar>
KkmcexModel<Scalar> kkmcex_fit(std::shared_ptr<const KroneckerKernel<Scalar>> kernel, const ObservationSet<Scalar>& obs,
                               double mu) {
  detail::require_mu(mu);
  detail::require(kernel != nullptr, "kkmcex_fit: null kernel");
  detail::require_finite_observations(obs);
  Matrix<Scalar> system = kron_submatrix(*kernel, obs.sampling);
  Vector<Scalar> coeffs = detail::spd_solve_shifted(system, static_cast<Scalar>(mu), obs.values, "kkmcex_fit");
  return {std::move(kernel), obs.sampling, static_cast<Scalar>(mu), std::move(coeffs)};
}

template <typename Scalar>
KkmcexModel<Scalar> kkmcex_fit(const KroneckerKernel<Scalar>& kernel, const ObservationSet<Scalar>& obs, double mu) {
  return kkmcex_fit(std::make_shared<const KroneckerKernel<Scalar>>(kernel), obs, mu);
}

/// F_hat = unvec(K_z S^T dual_coeffs) = K_x C K_y with C the scattered coefficients.
template <typename Scalar>
Matrix<Scalar> kkmcex_predict(const KkmcexModel<Scalar>& model) {
  const Index n = model.kernel->n_rows();
  const Index l = model.kernel->n_cols();
  Matrix<Scalar> c = Matrix<Scalar>::Zero(n, l);
  for (Index k = 0; k < model.sampling.size(); ++k) c(model.sampling[k].row, model.sampling[k].col) = model.dual_coeffs(k);
  return kron_apply(*model.kernel, c);
}

// ---------------------------------------------------------------------------
// RRMCEX

template <typename Scalar = double>
struct RrmcexModel {
  std::shared_ptr<const FeatureMap<Scalar>> features;
  Scalar mu{};
  Vector<Scalar> xi;
};

/// Rows of Phi at the sampled vectorization indices: S Phi.
template <typename Scalar>
Matrix<Scalar> sampled_features(const FeatureMap<Scalar>& features, const SamplingSet& s) {
  detail::require(s.n_rows() == features.n_rows() && s.n_cols() == features.n_cols(),
                  "sampling set dimensions do not match the feature map");
  Matrix<Scalar> x(s.size(), features.dim());
  for (Index k = 0; k < s.size(); ++k) x.row(k) = features.row(s.vec_indices()[static_cast<std::size_t>(k)]);
  return x;
}

/// xi = (Phi^T S^T S Phi + mu I)^{-1} Phi^T S^T m_bar.
template <typename Scalar>
RrmcexModel<Scalar> rrmcex_fit(std::shared_ptr<const FeatureMap<Scalar>> features, const ObservationSet<Scalar>& obs,
                               double mu) {
  detail::require_mu(mu);
  detail::require(features != nullptr, "rrmcex_fit: null feature map");
  detail::require_finite_observations(obs);
  const Matrix<Scalar> x = sampled_features(*features, obs.sampling);
  Matrix<Scalar> gram = Matrix<Scalar>::Zero(features->dim(), features->dim());
  gram.template selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
  gram.template triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  const Vector<Scalar> rhs = x.transpose() * obs.values;
  Vector<Scalar> xi = detail::spd_solve_shifted(gram, static_cast<Scalar>(mu), rhs, "rrmcex_fit");
  return {std::move(features), static_cast<Scalar>(mu), std::move(xi)};
}

template <typename Scalar>
RrmcexModel<Scalar> rrmcex_fit(const FeatureMap<Scalar>& features, const ObservationSet<Scalar>& obs, double mu) {
  return rrmcex_fit(std::make_shared<const FeatureMap<Scalar>>(features), obs, mu);
}

template <typename Scalar>
Matrix<Scalar> rrmcex_predict(const RrmcexModel<Scalar>& model) {
  const Vector<Scalar> v = model.features->phi() * model.xi;
  return Eigen::Map<const Matrix<Scalar>>(v.data(), model.features->n_rows(), model.features->n_cols());
}

/// Zero coefficients; the starting point of the online iterations.
template <typename Scalar>
RrmcexModel<Scalar> rrmcex_zero(std::shared_ptr<const FeatureMap<Scalar>> features, double mu) {
  const Index d = features->dim();
  return {std::move(features), static_cast<Scalar>(mu), Vector<Scalar>::Zero(d)};
}

// ---------------------------------------------------------------------------
// Step sizes

struct ConstantStep {
  double t = 0.0;
};
/// t_n = c / (n + n0), n = 1, 2, ...
struct DecayingStep {
  double c = 1.0;
  double n0 = 1.0;
};

class StepSchedule {
 public:
  StepSchedule() = default;
  static StepSchedule constant(double t) {
    detail::require(std::isfinite(t) && t >= 0.0, "step size must be nonnegative");
    return StepSchedule(ConstantStep{t});
  }
  static StepSchedule decay(double c, double n0) {
    detail::require(std::isfinite(c) && c >= 0.0, "decay constant must be nonnegative");
    detail::require(std::isfinite(n0) && n0 > 0.0, "decay offset must be positive");
    return StepSchedule(DecayingStep{c, n0});
  }

  /// Step size of iteration n (one-based).
  [[nodiscard]] double at(std::int64_t n) const {
    if (const auto* s = std::get_if<ConstantStep>(&rule_)) return s->t;
    const auto& d = std::get<DecayingStep>(rule_);
    return d.c / (static_cast<double>(n) + d.n0);
  }

  [[nodiscard]] const std::variant<ConstantStep, DecayingStep>& rule() const { return rule_; }

 private:
  explicit StepSchedule(std::variant<ConstantStep, DecayingStep> r) : rule_(r) {}
  std::variant<ConstantStep, DecayingStep> rule_{ConstantStep{0.0}};
};

// ---------------------------------------------------------------------------
// Online RRMCEX

template <typename Scalar, typename VecDerived>
void orrmcex_update(const FeatureMap<Scalar>& features, Eigen::MatrixBase<VecDerived>& xi, Index vec, Scalar m, Scalar t,
                    Scalar mu) {
  const auto phi = features.row(vec);
  const Scalar residual = phi.dot(xi.transpose()) - m;
  xi *= (Scalar(1) - t * mu);
  xi.noalias() -= (t * residual) * phi.transpose();
}

/// One stochastic step on entry (i, j) with observation m.
template <typename Scalar>
RrmcexModel<Scalar> orrmcex_step(const RrmcexModel<Scalar>& model, Index i, Index j, Scalar m, double t, double mu) {
  const auto& f = *model.features;
  if (i < 0 || i >= f.n_rows() || j < 0 || j >= f.n_cols())
    throw IndexError("orrmcex_step: entry (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
  RrmcexModel<Scalar> next = model;
  orrmcex_update(f, next.xi, vec_index(i, j, f.n_rows()), m, static_cast<Scalar>(t), static_cast<Scalar>(mu));
  return next;
}

template <typename Scalar>
struct OnlineOptions {
  StepSchedule schedule = StepSchedule::constant(0.0);
  /// Regularization of the batch objective; each step uses mu / S so the
  /// iterations target the batch RRMCEX solution.
  double mu = 1.0;
  Index epochs = 1;
  std::uint64_t seed = 0;
  /// Fresh random order each epoch; otherwise one seeded order is cycled.
  bool reshuffle = true;
  /// Called every `stride` steps (and after the last step) when stride > 0.
  Index stride = 0;
  std::function<void(std::int64_t step, const RrmcexModel<Scalar>&)> hook;
};

template <typename Scalar>
RrmcexModel<Scalar> orrmcex_run(std::shared_ptr<const FeatureMap<Scalar>> features, const ObservationSet<Scalar>& obs,
                                const OnlineOptions<Scalar>& opt,
                                std::optional<RrmcexModel<Scalar>> initial = std::nullopt) {
  detail::require_mu(opt.mu);
  detail::require(opt.epochs >= 0, "orrmcex_run: epochs must be nonnegative");
  detail::require(obs.n_rows() == features->n_rows() && obs.n_cols() == features->n_cols(),
                  "orrmcex_run: observation dimensions do not match the feature map");
  RrmcexModel<Scalar> model = initial ? *initial : rrmcex_zero(features, opt.mu);
  model.mu = static_cast<Scalar>(opt.mu);
  const Index count = obs.size();
  if (count == 0 || opt.epochs == 0) return model;

  const Scalar step_mu = static_cast<Scalar>(opt.mu / static_cast<double>(count));
  std::vector<Index> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(opt.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::int64_t n = 0;
  const std::int64_t total = static_cast<std::int64_t>(count) * opt.epochs;
  for (Index epoch = 0; epoch < opt.epochs; ++epoch) {
    if (epoch > 0 && opt.reshuffle) std::shuffle(order.begin(), order.end(), rng);
    for (Index k : order) {
      ++n;
      orrmcex_update(*features, model.xi, obs.sampling.vec_indices()[static_cast<std::size_t>(k)], obs.values(k),
                     static_cast<Scalar>(opt.schedule.at(n)), step_mu);
      if (opt.hook && opt.stride > 0 && (n % opt.stride == 0 || n == total)) opt.hook(n, model);
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Factorization baselines

template <typename Scalar = double>
struct FactorModel {
  Matrix<Scalar> w;  // N x p
  Matrix<Scalar> h;  // L x p
  Scalar mu{};
  std::optional<std::pair<Matrix<Scalar>, Matrix<Scalar>>> kernel_reg;  // (K_x, K_y) when kernel-regularized
  /// Objective after initialization and after every half-step (ALS) or epoch (SGD).
  std::vector<Scalar> objective_trace;
  Index iterations = 0;

  [[nodiscard]] Index rank() const { return w.cols(); }
};

template <typename Scalar>
Matrix<Scalar> factor_predict(const FactorModel<Scalar>& model) {
  return model.w * model.h.transpose();
}

namespace detail {

template <typename Scalar>
Scalar data_misfit(const ObservationSet<Scalar>& obs, const Matrix<Scalar>& w, const Matrix<Scalar>& h) {
  Scalar acc = 0;
  for (Index k = 0; k < obs.size(); ++k) {
    const Entry& e = obs.sampling[k];
    const Scalar r = obs.values(k) - w.row(e.row).dot(h.row(e.col));
    acc += r * r;
  }
  return acc;
}

// Inverse of a symmetric positive definite kernel; throws when it is singular.
template <typename Scalar>
Matrix<Scalar> kernel_inverse(const Matrix<Scalar>& k, const char* which) {
  Eigen::LLT<Matrix<Scalar>> llt(k);
  if (llt.info() != Eigen::Success || !(llt.rcond() > Scalar(1e3) * std::numeric_limits<Scalar>::epsilon()))
    throw NumericalError(std::string("als_fit: kernel ") + which + " is singular");
  Matrix<Scalar> inv = llt.solve(Matrix<Scalar>::Identity(k.rows(), k.cols()));
  return Scalar(0.5) * (inv + inv.transpose());
}

// Exact minimizer of sum_Omega (m_ij - a_i^T b_j)^2 + mu tr(A^T K^{-1} A) over A,
// with B fixed. `rows_of` selects which side of each entry indexes A.
template <typename Scalar>
Matrix<Scalar> als_half_step(const ObservationSet<Scalar>& obs, const Matrix<Scalar>& fixed, const Matrix<Scalar>& k_inv,
                             Scalar mu, bool update_rows) {
  const Index n = k_inv.rows();
  const Index p = fixed.cols();
  Matrix<Scalar> system = Matrix<Scalar>::Zero(n * p, n * p);
  for (Index a = 0; a < p; ++a) system.block(a * n, a * n, n, n) = mu * k_inv;
  Matrix<Scalar> rhs = Matrix<Scalar>::Zero(n, p);
  for (Index k = 0; k < obs.size(); ++k) {
    const Entry& e = obs.sampling[k];
    const Index own = update_rows ? e.row : e.col;
    const Index other = update_rows ? e.col : e.row;
    const auto b = fixed.row(other);
    rhs.row(own) += obs.values(k) * b;
    for (Index c = 0; c < p; ++c)
      for (Index r = 0; r < p; ++r) system(r * n + own, c * n + own) += b(r) * b(c);
  }
  Eigen::LLT<Matrix<Scalar>> llt(system);
  if (llt.info() != Eigen::Success) throw NumericalError("als_fit: subproblem is not positive definite");
  const Vector<Scalar> sol = llt.solve(Eigen::Map<const Vector<Scalar>>(rhs.data(), n * p));
  return Eigen::Map<const Matrix<Scalar>>(sol.data(), n, p);
}

}  // namespace detail

/// J(W, H) = ||P_Omega(M - W H^T)||_F^2 + mu tr(W^T K_x^{-1} W) + mu tr(H^T K_y^{-1} H).
template <typename Scalar>
Scalar factor_objective(const ObservationSet<Scalar>& obs, const Matrix<Scalar>& w, const Matrix<Scalar>& h,
                        const Matrix<Scalar>& kx_inv, const Matrix<Scalar>& ky_inv, Scalar mu) {
  return detail::data_misfit(obs, w, h) + mu * (w.transpose() * kx_inv * w).trace() +
         mu * (h.transpose() * ky_inv * h).trace();
}

struct AlsOptions {
  Index rank = 10;
  double mu = 1.0;
  Index max_iters = 500;
  double rel_tol = 1e-6;
  std::uint64_t seed = 0;
};

/// Random factors with iid N(0, 1/p) entries.
template <typename Scalar>
std::pair<Matrix<Scalar>, Matrix<Scalar>> random_factors(Index n, Index l, Index p, std::uint64_t seed) {
  detail::require(p >= 1, "factor rank p must be at least 1");
  std::mt19937_64 rng(seed);
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(p));
  Matrix<Scalar> w = scale * standard_normal_matrix<Scalar>(n, p, rng);
  Matrix<Scalar> h = scale * standard_normal_matrix<Scalar>(l, p, rng);
  return {std::move(w), std::move(h)};
}

/// Alternating exact block minimization of the kernel-regularized factorization
/// objective, starting from (w0, h0). Each half-step solves one N p (or L p)
/// linear system. Stops when the relative decrease over a full iteration falls
/// below rel_tol or after max_iters iterations.
template <typename Scalar>
FactorModel<Scalar> als_fit(const ObservationSet<Scalar>& obs, const KernelMatrix<Scalar>& kx,
                            const KernelMatrix<Scalar>& ky, const AlsOptions& opt, Matrix<Scalar> w0,
                            Matrix<Scalar> h0) {
  detail::require_mu(opt.mu);
  detail::require(opt.rank >= 1, "als_fit: rank must be at least 1");
  detail::require(opt.max_iters >= 0, "als_fit: max_iters must be nonnegative");
  detail::require(kx.side() == obs.n_rows() && ky.side() == obs.n_cols(), "als_fit: kernel sides do not match");
  detail::require(w0.rows() == obs.n_rows() && h0.rows() == obs.n_cols() && w0.cols() == opt.rank &&
                      h0.cols() == opt.rank,
                  "als_fit: initial factor shapes do not match");
  detail::require_finite_observations(obs);

  const Scalar mu = static_cast<Scalar>(opt.mu);
  const Matrix<Scalar> kx_inv = detail::kernel_inverse(kx.matrix(), "K_x");
  const Matrix<Scalar> ky_inv = detail::kernel_inverse(ky.matrix(), "K_y");

  FactorModel<Scalar> model{std::move(w0), std::move(h0), mu, std::make_pair(kx.matrix(), ky.matrix()), {}, 0};
  Scalar current = factor_objective(obs, model.w, model.h, kx_inv, ky_inv, mu);
  model.objective_trace.push_back(current);

  auto record = [&](Scalar value) {
    const Scalar slack = Scalar(1e-10) * std::max(Scalar(1), std::abs(current));
    if (value > current + slack)
      throw NumericalError("als_fit: objective increased from " + std::to_string(current) + " to " +
                           std::to_string(value));
    current = value;
    model.objective_trace.push_back(value);
  };

  for (Index it = 0; it < opt.max_iters; ++it) {
    const Scalar start = current;
    model.w = detail::als_half_step(obs, model.h, kx_inv, mu, true);
    record(factor_objective(obs, model.w, model.h, kx_inv, ky_inv, mu));
    model.h = detail::als_half_step(obs, model.w, ky_inv, mu, false);
    record(factor_objective(obs, model.w, model.h, kx_inv, ky_inv, mu));
    model.iterations = it + 1;
    const Scalar denom = std::max(std::abs(start), std::numeric_limits<Scalar>::min());
    if ((start - current) / denom < static_cast<Scalar>(opt.rel_tol)) break;
  }
  return model;
}

template <typename Scalar>
FactorModel<Scalar> als_fit(const ObservationSet<Scalar>& obs, const KernelMatrix<Scalar>& kx,
                            const KernelMatrix<Scalar>& ky, const AlsOptions& opt) {
  auto [w0, h0] = random_factors<Scalar>(obs.n_rows(), obs.n_cols(), opt.rank, opt.seed);
  return als_fit(obs, kx, ky, opt, std::move(w0), std::move(h0));
}

/// Per-entry regularization weights mu/|Omega_i^w| and mu/|Omega_j^h|.
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> entry_weights(const SamplingSet& s, double mu) {
  Vector<Scalar> rw = Vector<Scalar>::Zero(s.n_rows());
  Vector<Scalar> cw = Vector<Scalar>::Zero(s.n_cols());
  for (const Entry& e : s.entries()) {
    rw(e.row) += Scalar(1);
    cw(e.col) += Scalar(1);
  }
  for (Index i = 0; i < rw.size(); ++i) rw(i) = rw(i) > 0 ? static_cast<Scalar>(mu) / rw(i) : Scalar(0);
  for (Index j = 0; j < cw.size(); ++j) cw(j) = cw(j) > 0 ? static_cast<Scalar>(mu) / cw(j) : Scalar(0);
  return {std::move(rw), std::move(cw)};
}

/// Summand (m - w^T h)^2 + mu_w ||w||^2 + mu_h ||h||^2 for one observed entry.
template <typename Scalar>
Scalar factor_entry_loss(const Vector<Scalar>& w, const Vector<Scalar>& h, Scalar m, Scalar mu_w, Scalar mu_h) {
  const Scalar r = m - w.dot(h);
  return r * r + mu_w * w.squaredNorm() + mu_h * h.squaredNorm();
}

/// Gradient of factor_entry_loss with respect to (w, h).
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> factor_entry_gradient(const Vector<Scalar>& w, const Vector<Scalar>& h,
                                                                Scalar m, Scalar mu_w, Scalar mu_h) {
  const Scalar r = m - w.dot(h);
  return {Scalar(-2) * r * h + Scalar(2) * mu_w * w, Scalar(-2) * r * w + Scalar(2) * mu_h * h};
}

/// In-place SGD step on rows w_i, h_j using the gradient of the entry summand.
template <typename Scalar>
void factor_sgd_step(FactorModel<Scalar>& model, Index i, Index j, Scalar m, Scalar t, Scalar mu_w, Scalar mu_h) {
  auto wi = model.w.row(i);
  auto hj = model.h.row(j);
  const Scalar r = m - wi.dot(hj);
  const Vector<Scalar> w_old = wi.transpose();
  wi = wi * (Scalar(1) - Scalar(2) * t * mu_w) + (Scalar(2) * t * r) * hj;
  hj = hj * (Scalar(1) - Scalar(2) * t * mu_h) + (Scalar(2) * t * r) * w_old.transpose();
}

/// Sum of the entry summands over Omega.
template <typename Scalar>
Scalar factor_sgd_objective(const ObservationSet<Scalar>& obs, const FactorModel<Scalar>& model, double mu) {
  const auto [rw, cw] = entry_weights<Scalar>(obs.sampling, mu);
  Scalar acc = 0;
  for (Index k = 0; k < obs.size(); ++k) {
    const Entry& e = obs.sampling[k];
    const Scalar r = obs.values(k) - model.w.row(e.row).dot(model.h.row(e.col));
    acc += r * r + rw(e.row) * model.w.row(e.row).squaredNorm() + cw(e.col) * model.h.row(e.col).squaredNorm();
  }
  return acc;
}

struct FactorSgdOptions {
  Index rank = 10;
  double mu = 1.0;
  StepSchedule schedule = StepSchedule::constant(0.01);
  Index epochs = 100;
  std::uint64_t seed = 0;
};

/// Stochastic gradient descent on the row-separable factorization objective.
/// Entries are visited in a fresh seeded order each epoch.
template <typename Scalar>
FactorModel<Scalar> factor_sgd_fit(const ObservationSet<Scalar>& obs, const FactorSgdOptions& opt,
                                   std::optional<FactorModel<Scalar>> initial = std::nullopt) {
  detail::require(std::isfinite(opt.mu) && opt.mu >= 0.0, "factor_sgd_fit: mu must be nonnegative");
  detail::require(opt.rank >= 1, "factor_sgd_fit: rank must be at least 1");
  detail::require(opt.epochs >= 0, "factor_sgd_fit: epochs must be nonnegative");
  detail::require_finite_observations(obs);
  FactorModel<Scalar> model;
  if (initial) {
    model = *initial;
  } else {
    auto [w0, h0] = random_factors<Scalar>(obs.n_rows(), obs.n_cols(), opt.rank, opt.seed);
    model.w = std::move(w0);
    model.h = std::move(h0);
  }
  model.mu = static_cast<Scalar>(opt.mu);
  const auto [rw, cw] = entry_weights<Scalar>(obs.sampling, opt.mu);

  std::vector<Index> order(static_cast<std::size_t>(obs.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(detail::mix_seed(opt.seed, 1));
  std::int64_t n = 0;
  model.objective_trace.push_back(factor_sgd_objective(obs, model, opt.mu));
  for (Index epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index k : order) {
      const Entry& e = obs.sampling[k];
      factor_sgd_step(model, e.row, e.col, obs.values(k), static_cast<Scalar>(opt.schedule.at(++n)), rw(e.row),
                      cw(e.col));
    }
    model.objective_trace.push_back(factor_sgd_objective(obs, model, opt.mu));
    model.iterations = epoch + 1;
    if (!std::isfinite(static_cast<double>(model.objective_trace.back())))
      throw NumericalError("factor_sgd_fit: iterates diverged; reduce the step size");
  }
  return model;
}

}  // namespace kmcex
