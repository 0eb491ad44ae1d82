#include "kmcex/verify.hpp"

#include "kmcex/analysis.hpp"
#include "kmcex/graphs.hpp"
#include "kmcex/io.hpp"
#include "kmcex/kernels.hpp"

#include <limits>
#include <ostream>
#include <sstream>

namespace kmcex {

namespace {

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

double min_eigenvalue(const Matrix<double>& m) {
  Eigen::SelfAdjointEigenSolver<Matrix<double>> eig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("verify: eigendecomposition failed");
  return eig.eigenvalues().minCoeff();
}

CheckResult summarize(std::string name, Index instances, Index failures, std::string detail) {
  return {std::move(name), failures == 0, instances, failures, std::move(detail)};
}

}  // namespace

bool VerifyReport::passed() const {
  for (const auto& c : checks)
    if (!c.passed) return false;
  return true;
}

Index VerifyReport::failures() const {
  Index n = 0;
  for (const auto& c : checks) n += c.passed ? 0 : 1;
  return n;
}

TheoryInstance random_theory_instance(std::mt19937_64& rng, Index n, Index l) {
  detail::require(n >= 1 && l >= 1, "random_theory_instance: sides must be positive");
  const std::uint64_t gx = rng();
  const double ex = log_uniform(rng, 0.1, 1.0);
  const std::uint64_t gy = rng();
  const double ey = log_uniform(rng, 0.1, 1.0);
  const auto kx = spectral_kernel(build_laplacian(erdos_renyi<double>(n, 0.5, gx)), Diffusion{ex});
  const auto ky = spectral_kernel(build_laplacian(erdos_renyi<double>(l, 0.5, gy)), Diffusion{ey});
  TheoryInstance out;
  out.k = KroneckerKernel<double>(kx, ky).dense();
  std::uniform_int_distribution<Index> count(1, n * l);
  const Index s = count(rng);
  out.sampling = uniform_sample(n, l, s, rng());
  out.gamma = standard_normal_matrix<double>(n * l, 1, rng);
  out.mu = log_uniform(rng, 1e-3, 10.0);
  return out;
}

TheoryInstance random_theory_instance(std::mt19937_64& rng, Index max_side) {
  detail::require(max_side >= 2, "random_theory_instance: max_side must be at least 2");
  std::uniform_int_distribution<Index> side(2, max_side);
  const Index n = side(rng);
  const Index l = side(rng);
  return random_theory_instance(rng, n, l);
}

VerifyReport run_verify(const VerifyOptions& options) {
  detail::require(options.instances >= 1 && options.mc_instances >= 1, "verify: instance counts must be positive");
  detail::require(options.draws >= 2, "verify: at least two Monte Carlo draws are required");
  detail::require(options.nu_sq >= 0.0, "verify: noise variance must be nonnegative");
  VerifyReport report;

  {
    std::mt19937_64 rng(detail::mix_seed(options.seed, 1));
    Index failures = 0;
    double worst = 0.0;
    for (Index i = 0; i < options.mc_instances; ++i) {
      const TheoryInstance inst = random_theory_instance(rng, 4, 2);
      MonteCarloOptions mc;
      mc.draws = options.draws;
      mc.seed = rng();
      const auto r = mse_decomposition(inst.k, inst.sampling, inst.gamma, inst.mu, options.nu_sq, mc);
      const double rel = std::abs(*r.empirical_mse - r.total) / r.total;
      worst = std::max(worst, rel);
      if (!(rel <= options.mc_rel_tol)) ++failures;
    }
    report.checks.push_back(summarize("monte_carlo_mse", options.mc_instances, failures,
                                      "worst relative gap " + io::format_number(worst)));
  }

  std::mt19937_64 rng(detail::mix_seed(options.seed, 2));
  Index bound_failures = 0;
  Index eig_failures = 0;
  Index psd_failures = 0;
  double worst_eig_margin = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < options.instances; ++i) {
    const TheoryInstance inst = random_theory_instance(rng, options.max_side);
    const auto mse = mse_decomposition(inst.k, inst.sampling, inst.gamma, inst.mu, options.nu_sq);
    const double bound = mse_bound(bound_inputs(inst.k, inst.sampling, inst.gamma, inst.mu, options.nu_sq));
    const double margin = bound - mse.total;
    if (!(margin >= -1e-12 * std::max(1.0, bound))) ++bound_failures;
    report.rows.push_back({i + 1, mse.bias_sq, mse.variance, std::numeric_limits<double>::quiet_NaN(), bound, margin});

    const auto eig = eig_bound_check(inst.k, inst.sampling, inst.mu);
    worst_eig_margin = std::min(worst_eig_margin, eig.worst_margin);
    if (!eig.passed) ++eig_failures;

    const Matrix<double> t = regularized_nystrom(inst.k, inst.sampling, inst.mu).t_tilde;
    const double scale = 1e-8 * std::max(1.0, inst.k.cwiseAbs().maxCoeff());
    if (min_eigenvalue(t) < -scale || min_eigenvalue(inst.k - t) < -scale) ++psd_failures;
  }
  report.checks.push_back(summarize("mse_bound", options.instances, bound_failures, "total <= bound"));
  report.checks.push_back(summarize("eigenvalue_domination", options.instances, eig_failures,
                                    "worst margin " + io::format_number(worst_eig_margin)));
  report.checks.push_back(summarize("nystrom_psd", options.instances, psd_failures, "T and K - T PSD"));

  {
    // Full sampling with mu far below the smallest kernel eigenvalue: bias scales as mu^2.
    std::mt19937_64 brng(detail::mix_seed(options.seed, 3));
    Index failures = 0;
    double worst = std::numeric_limits<double>::infinity();
    const Index count = std::min<Index>(options.instances, 20);
    for (Index i = 0; i < count; ++i) {
      TheoryInstance inst = random_theory_instance(brng, options.max_side);
      const SamplingSet all = full_sampling(inst.sampling.n_rows(), inst.sampling.n_cols());
      const double mu = 1e-3 * min_eigenvalue(inst.k);
      const double a = mse_decomposition(inst.k, all, inst.gamma, mu, 0.0).bias_sq;
      const double b = mse_decomposition(inst.k, all, inst.gamma, mu / 2, 0.0).bias_sq;
      const double ratio = a / b;
      worst = std::min(worst, ratio);
      if (!(ratio >= 3.9)) ++failures;
    }
    report.checks.push_back(
        summarize("bias_mu_squared_rate", count, failures, "smallest halving ratio " + io::format_number(worst)));
  }
  return report;
}

void write_report_csv(std::ostream& out, const VerifyReport& report) {
  out << "instance,bias_sq,variance,empirical_mse,bound,margin\n";
  for (const auto& r : report.rows)
    out << r.instance << ',' << io::format_number(r.bias_sq) << ',' << io::format_number(r.variance) << ','
        << (std::isnan(r.empirical_mse) ? std::string() : io::format_number(r.empirical_mse)) << ','
        << io::format_number(r.bound) << ',' << io::format_number(r.margin) << '\n';
}

}  // namespace kmcex
