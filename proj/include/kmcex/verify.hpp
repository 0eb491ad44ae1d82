#pragma once

// User-runnable suite for the error theory of the KKMCEX estimator: Monte
// Carlo agreement of the bias/variance split, the eigenvalue domination of
// K - T, the MSE bound, PSD-ness of the Nystrom pieces and the mu^2 bias rate.

#include "kmcex/common.hpp"
#include "kmcex/sampling.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace kmcex {

struct CheckResult {
  std::string name;
  bool passed = false;
  Index instances = 0;
  Index failures = 0;
  std::string detail;
};

struct BoundRow {
  Index instance = 0;
  double bias_sq = 0.0;
  double variance = 0.0;
  double empirical_mse = 0.0;  // NaN when the instance ran without Monte Carlo
  double bound = 0.0;
  double margin = 0.0;  // bound - (bias_sq + variance)
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  Index instances = 200;     // bound, eigenvalue and PSD checks
  Index mc_instances = 5;    // Monte Carlo checks on 4 x 2 grids
  Index draws = 100000;
  double nu_sq = 0.25;
  double mc_rel_tol = 0.03;
  Index max_side = 6;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  std::vector<BoundRow> rows;
  [[nodiscard]] bool passed() const;
  [[nodiscard]] Index failures() const;
};

/// Random small instance: K = K_y (x) K_x from diffusion kernels on G(n, 1/2)
/// graphs (nonsingular), a uniform sampling set, standard normal gamma and a
/// log-uniform mu in [1e-3, 10].
struct TheoryInstance {
  Matrix<double> k;
  SamplingSet sampling;
  Vector<double> gamma;
  double mu = 1.0;
};

TheoryInstance random_theory_instance(std::mt19937_64& rng, Index n, Index l);
TheoryInstance random_theory_instance(std::mt19937_64& rng, Index max_side);

VerifyReport run_verify(const VerifyOptions& options);

/// One line per bound instance: instance,bias_sq,variance,empirical_mse,bound,margin.
void write_report_csv(std::ostream& out, const VerifyReport& report);

}  // namespace kmcex
