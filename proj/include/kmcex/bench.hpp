#pragma once

// Datasets and experiment protocols: NMSE-versus-P_s sweeps, grid search over
// (mu, eta) and online traces.

#include "kmcex/graphs.hpp"
#include "kmcex/kernels.hpp"
#include "kmcex/sampling.hpp"
#include "kmcex/solvers.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace kmcex::bench {

enum class Method { Kkmcex, Rrmcex, Orrmcex, Als, FactorSgd };

const char* to_string(Method m);
Method parse_method(const std::string& s);

enum class FeatureRecipe { Eig, Svd };

/// Ground truth plus the prior information used by every estimator.
struct DatasetBundle {
  std::string name;
  Matrix<double> f;
  KernelMatrix<double> kx;
  KernelMatrix<double> ky;
  std::optional<Matrix<double>> x;  // row features, N x t_x
  std::optional<Matrix<double>> y;  // column features, L x t_y
  /// When present, kernels are rebuilt as diffusion kernels for each eta on the grid.
  std::optional<Laplacian<double>> lx;
  std::optional<Laplacian<double>> ly;
  FeatureRecipe features = FeatureRecipe::Eig;
  std::string provenance;
  /// Wall time spent building the bundle kernels; never counted in solver timings.
  double kernel_seconds = 0.0;

  [[nodiscard]] Index n_rows() const { return f.rows(); }
  [[nodiscard]] Index n_cols() const { return f.cols(); }
  [[nodiscard]] bool tunable_eta() const { return lx.has_value() && ly.has_value(); }
  /// (K_x, K_y) for the given eta; the stored kernels when eta is not tunable.
  [[nodiscard]] std::pair<KernelMatrix<double>, KernelMatrix<double>> kernels_for(double eta) const;
  /// Rank-d feature map following the bundle recipe.
  [[nodiscard]] FeatureMap<double> feature_map(const KernelMatrix<double>& kx, const KernelMatrix<double>& ky,
                                               Index d) const;
};

/// Two independent G(n, p) graphs, diffusion kernels with weight eta and
/// F = K_x Gamma K_y with iid standard normal Gamma.
DatasetBundle generate_synthetic(Index n, Index l, double graph_p, double eta, std::uint64_t seed);

/// Stations x days matrix with station kernels from the symmetrized k-NN graph
/// of the station distances (heat weights on hop distances) and day kernels
/// from a band graph joining days up to `day_width` apart.
DatasetBundle temperature_bundle(Matrix<double> f, const Matrix<double>& station_distances, Index k_neighbors,
                                 Index day_width, double eta, std::string provenance);

/// Random planar stations and F = K_x Gamma K_y on the temperature graphs.
DatasetBundle synthetic_temperature(Index stations, Index days, std::uint64_t seed);

/// One binary column per (attribute, category), categories in first-appearance order.
Matrix<double> onehot_features(const std::vector<std::vector<std::string>>& rows);

struct CategoricalTable {
  std::vector<std::string> labels;
  std::vector<std::vector<std::string>> attributes;
};

/// Label in the first column, categorical attributes after it.
CategoricalTable read_categorical_csv(std::istream& in, const std::string& source = "<stream>");

/// Drops records with a '?' attribute, keeps `subsample` of the rest (seeded,
/// original order; all of them when fewer remain), and builds F_ij = +1 for
/// equal labels and -1 otherwise, K_x = K_y = Pearson kernel of the one-hot
/// rows, SVD features.
DatasetBundle mushroom_bundle(const CategoricalTable& table, Index subsample, std::uint64_t seed,
                              std::string provenance);

/// Categorical records with 22 attributes whose category frequencies depend on a binary label.
CategoricalTable synthetic_categorical(Index records, std::uint64_t seed);

struct ExperimentConfig {
  std::vector<Method> methods{Method::Kkmcex};
  std::vector<double> ps{10.0};
  Index realizations = 1;
  std::vector<double> mu_grid;
  std::vector<double> eta_grid;
  Index rank = 10;
  Index dim = 250;
  double snr = 0.0;             // 0 means no snr-targeted noise
  double noise_variance = 0.0;  // 0 means no fixed-variance noise
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  Index epochs = 20;
  /// Decaying step t_n = step_c / (n + step_n0); derived from the data when unset.
  std::optional<double> step_c;
  std::optional<double> step_n0;
  Index stride = 0;  // 0: final point only
  Index max_iters = 500;
  double rel_tol = 1e-6;

  std::string dataset = "synthetic";
  Index n = 250;
  Index l = 250;
  double graph_p = 0.03;
  double gen_eta = 1.0;
  std::uint64_t data_seed = 1;
  std::string matrix_path;
  std::string distances_path;
  std::string categorical_path;
  Index k_neighbors = 8;
  Index day_width = 10;
  Index subsample = 400;

  ExperimentConfig();
  /// Sets one key from its text form; throws InvalidInput naming the key.
  void set(const std::string& key, const std::string& value);
  /// Throws InvalidInput when the configuration is inconsistent.
  void validate() const;
  [[nodiscard]] NoiseSpec noise(std::uint64_t seed) const;
};

/// Logarithmic grids 1e-6..1e2 (mu) and 1e-2..1e1 (eta), one point per decade.
std::vector<double> default_mu_grid();
std::vector<double> default_eta_grid();

/// Flat key=value text; '#' starts a comment.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<stream>");
ExperimentConfig load_config(const std::string& path);

DatasetBundle load_dataset(const ExperimentConfig& config);

struct FitOutcome {
  Matrix<double> estimate;
  double seconds = 0.0;
};

/// Fits `method` on `obs` and predicts the full matrix. Timing covers the fit
/// and the prediction; for the feature-map methods it also covers building the
/// feature map, which those methods need per kernel choice.
FitOutcome fit_predict(Method method, const DatasetBundle& data, const KernelMatrix<double>& kx,
                       const KernelMatrix<double>& ky, const ObservationSet<double>& obs, double mu,
                       const ExperimentConfig& config, std::uint64_t seed);

struct GridChoice {
  double mu = 0.0;
  double eta = 0.0;
  double score = 0.0;  // validation NMSE; NaN when the grid was a single point
};

/// Holds out `validation_fraction` of `obs` and picks the (mu, eta) minimizing the
/// validation NMSE. Ties go to the larger mu, then to the earlier eta.
GridChoice grid_search(const ExperimentConfig& config, const DatasetBundle& data, Method method,
                       const ObservationSet<double>& obs, double validation_fraction, std::uint64_t seed);

/// Convenience form: first method and first P_s of the config, realization 0.
GridChoice grid_search(const ExperimentConfig& config, const DatasetBundle& data, double validation_fraction);

/// Observations of realization r at the p-th sampling percentage; identical for every method.
ObservationSet<double> realization_observations(const ExperimentConfig& config, const DatasetBundle& data,
                                                std::size_t ps_index, Index realization);

struct ResultRow {
  Method method{};
  double ps = 0.0;
  Index realization = 0;
  double nmse = 0.0;
  double seconds = 0.0;
  double mu = 0.0;
  std::optional<double> eta;
};

struct SummaryRow {
  Method method{};
  double ps = 0.0;
  double nmse = 0.0;     // mean over realizations
  double seconds = 0.0;  // mean over realizations
  double mu = 0.0;
  std::optional<double> eta;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<SummaryRow> summary;
  /// Per-row estimates, populated when requested.
  std::vector<Matrix<double>> estimates;
};

struct SweepOptions {
  bool keep_estimates = false;
  std::function<void(const ResultRow&)> progress;
};

/// For every method, P_s and realization: draw Omega, observe, fit, predict and
/// score. With multi-point grids the parameters are chosen once per (method, P_s)
/// on realization 0 and reused for the remaining realizations.
ExperimentResult run_sweep(const ExperimentConfig& config, const DatasetBundle& data, const SweepOptions& options = {});

void write_results_csv(std::ostream& out, const ExperimentResult& result);

struct TracePoint {
  std::int64_t iteration = 0;
  double seconds = 0.0;
  double nmse = 0.0;
};

struct OnlineTrace {
  Method method{};
  double ps = 0.0;
  double mu = 0.0;
  std::optional<double> eta;
  std::vector<TracePoint> points;
};

/// Reveals the observations of realization 0 at the first P_s one per iteration
/// in a seeded order, cycling for `epochs` passes. Seconds exclude NMSE evaluation.
OnlineTrace run_online(const ExperimentConfig& config, const DatasetBundle& data);

void write_trace_csv(std::ostream& out, const OnlineTrace& trace);

/// Decaying schedule used when the config leaves it unset: t_1 = 1 / max ||phi||^2
/// over the observed rows and n0 = 10 S.
StepSchedule default_online_schedule(const FeatureMap<double>& features, const SamplingSet& s);

/// Factor-SGD starting point with iid Gaussian entries whose scale makes the
/// entries of W H^T match the mean square of the observations.
FactorModel<double> data_scaled_factors(const ObservationSet<double>& obs, Index rank, std::uint64_t seed);

/// Decaying schedule for factor SGD when unset: t_1 = 0.2 / (q + max mu_w) with
/// q = sqrt(p * mean m^2) the squared row norm of data_scaled_factors, n0 = 10 S.
StepSchedule default_factor_schedule(const ObservationSet<double>& obs, Index rank, double mu);

}  // namespace kmcex::bench
