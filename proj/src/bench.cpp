#include "kmcex/bench.hpp"

#include "kmcex/analysis.hpp"
#include "kmcex/io.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

namespace kmcex::bench {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

KernelMatrix<double> diffusion(const Laplacian<double>& lap, double eta) {
  return spectral_kernel(lap, Diffusion{eta});
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    return io::parse_number(value);
  } catch (const InvalidInput&) {
    throw InvalidInput("config key '" + key + "': '" + value + "' is not a number");
  }
}

Index parse_count(const std::string& key, const std::string& value) {
  const double v = parse_real(key, value);
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e15)
    throw InvalidInput("config key '" + key + "': '" + value + "' is not a nonnegative integer");
  return static_cast<Index>(v);
}

std::vector<double> parse_reals(const std::string& key, const std::string& value) {
  std::vector<double> out;
  for (const auto& item : split_list(value)) out.push_back(parse_real(key, item));
  if (out.empty()) throw InvalidInput("config key '" + key + "': empty list");
  return out;
}

// Rethrows the active solver exception with the experiment coordinates prepended.
[[noreturn]] void rethrow_annotated(Method m, double ps, Index realization) {
  const std::string where =
      std::string("(") + to_string(m) + ", P_s=" + io::format_number(ps) + ", realization=" + std::to_string(realization + 1) + ") ";
  try {
    throw;
  } catch (const NumericalError& e) {
    throw NumericalError(where + e.what());
  } catch (const IndexError& e) {
    throw IndexError(where + e.what());
  } catch (const InvalidInput& e) {
    throw InvalidInput(where + e.what());
  }
}

Index feature_dim(const ExperimentConfig& config, const DatasetBundle& data) {
  Index cap = data.n_rows() * data.n_cols();
  if (data.features == FeatureRecipe::Svd) cap = std::min(cap, data.x->cols() * data.y->cols());
  return std::min(config.dim, cap);
}

StepSchedule online_schedule(const ExperimentConfig& config, const FeatureMap<double>& fm, const SamplingSet& s) {
  if (config.step_c || config.step_n0) {
    const auto base = default_online_schedule(fm, s);
    const auto& d = std::get<DecayingStep>(base.rule());
    return StepSchedule::decay(config.step_c.value_or(d.c), config.step_n0.value_or(d.n0));
  }
  return default_online_schedule(fm, s);
}

StepSchedule factor_schedule(const ExperimentConfig& config, const ObservationSet<double>& obs, double mu) {
  const auto base = default_factor_schedule(obs, config.rank, mu);
  if (config.step_c || config.step_n0) {
    const auto& d = std::get<DecayingStep>(base.rule());
    return StepSchedule::decay(config.step_c.value_or(d.c), config.step_n0.value_or(d.n0));
  }
  return base;
}

std::uint64_t stream_seed(std::uint64_t seed, std::size_t ps_index, Index realization, std::uint64_t purpose) {
  return detail::mix_seed(detail::mix_seed(detail::mix_seed(seed, ps_index + 1), static_cast<std::uint64_t>(realization)),
                          purpose);
}

constexpr std::uint64_t kSampling = 0;
constexpr std::uint64_t kNoise = 1;
constexpr std::uint64_t kSolver = 2;
constexpr std::uint64_t kSplit = 3;

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::Kkmcex:
      return "kkmcex";
    case Method::Rrmcex:
      return "rrmcex";
    case Method::Orrmcex:
      return "orrmcex";
    case Method::Als:
      return "als";
    case Method::FactorSgd:
      return "factor_sgd";
  }
  return "kkmcex";
}

Method parse_method(const std::string& s) {
  if (s == "kkmcex") return Method::Kkmcex;
  if (s == "rrmcex") return Method::Rrmcex;
  if (s == "orrmcex") return Method::Orrmcex;
  if (s == "als") return Method::Als;
  if (s == "factor_sgd" || s == "sgd") return Method::FactorSgd;
  throw InvalidInput("unknown method '" + s + "' (expected kkmcex, rrmcex, orrmcex, als or factor_sgd)");
}

std::pair<KernelMatrix<double>, KernelMatrix<double>> DatasetBundle::kernels_for(double eta) const {
  if (!tunable_eta()) return {kx, ky};
  return {diffusion(*lx, eta), diffusion(*ly, eta)};
}

FeatureMap<double> DatasetBundle::feature_map(const KernelMatrix<double>& kx_, const KernelMatrix<double>& ky_,
                                              Index d) const {
  if (features == FeatureRecipe::Svd) {
    detail::require(x.has_value() && y.has_value(), "SVD feature recipe needs row and column features");
    return features_from_svd(*x, *y, d);
  }
  return features_from_eig(kx_, ky_, d);
}

DatasetBundle generate_synthetic(Index n, Index l, double graph_p, double eta, std::uint64_t seed) {
  detail::require(n >= 2 && l >= 2, "generate_synthetic: n and l must be at least 2");
  detail::require(eta > 0.0, "generate_synthetic: eta must be positive");
  DatasetBundle out;
  const auto start = Clock::now();
  out.lx = build_laplacian(erdos_renyi<double>(n, graph_p, detail::mix_seed(seed, 0)));
  out.ly = build_laplacian(erdos_renyi<double>(l, graph_p, detail::mix_seed(seed, 1)));
  out.kx = diffusion(*out.lx, eta);
  out.ky = diffusion(*out.ly, eta);
  out.kernel_seconds = seconds_since(start);
  std::mt19937_64 rng(detail::mix_seed(seed, 2));
  const Matrix<double> gamma = standard_normal_matrix<double>(n, l, rng);
  out.f = out.kx.matrix() * gamma * out.ky.matrix();
  out.name = "synthetic";
  out.provenance = "synthetic n=" + std::to_string(n) + " l=" + std::to_string(l) + " p=" + io::format_number(graph_p) +
                   " eta=" + io::format_number(eta) + " seed=" + std::to_string(seed);
  return out;
}

DatasetBundle temperature_bundle(Matrix<double> f, const Matrix<double>& station_distances, Index k_neighbors,
                                 Index day_width, double eta, std::string provenance) {
  detail::require(station_distances.rows() == f.rows(), "temperature_bundle: one distance row per station required");
  detail::require(f.cols() >= 2, "temperature_bundle: need at least two days");
  DatasetBundle out;
  const auto start = Clock::now();
  const Index n = f.rows();
  const Matrix<double> hops = geodesic_distances(knn_symmetric(station_distances, k_neighbors));
  out.lx = build_laplacian(heat_adjacency(hops, n));
  out.ly = build_laplacian(band_graph<double>(f.cols(), day_width));
  out.kx = diffusion(*out.lx, eta);
  out.ky = diffusion(*out.ly, eta);
  out.kernel_seconds = seconds_since(start);
  out.f = std::move(f);
  out.name = "temperature";
  out.provenance = std::move(provenance);
  return out;
}

DatasetBundle synthetic_temperature(Index stations, Index days, std::uint64_t seed) {
  detail::require(stations >= 10 && days >= 2, "synthetic_temperature: need at least 10 stations and 2 days");
  std::mt19937_64 rng(detail::mix_seed(seed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix<double> xy(stations, 2);
  for (Index i = 0; i < stations; ++i) xy.row(i) << unit(rng), unit(rng);
  Matrix<double> dist(stations, stations);
  for (Index j = 0; j < stations; ++j)
    for (Index i = 0; i < stations; ++i) dist(i, j) = (xy.row(i) - xy.row(j)).norm();
  // Evaluate the norm symmetrically so the matrix is exactly symmetric.
  dist = dist.triangularView<Eigen::Upper>();
  dist.triangularView<Eigen::StrictlyLower>() = dist.transpose();

  DatasetBundle out = temperature_bundle(Matrix<double>::Zero(stations, days), dist, 8, 10, 1.0, "");
  std::mt19937_64 grng(detail::mix_seed(seed, 1));
  out.f = out.kx.matrix() * standard_normal_matrix<double>(stations, days, grng) * out.ky.matrix();
  out.name = "temperature-synthetic";
  out.provenance = "synthetic temperature stations=" + std::to_string(stations) + " days=" + std::to_string(days) +
                   " seed=" + std::to_string(seed);
  return out;
}

Matrix<double> onehot_features(const std::vector<std::vector<std::string>>& rows) {
  detail::require(!rows.empty(), "onehot_features: no rows");
  const std::size_t arity = rows.front().size();
  detail::require(arity >= 1, "onehot_features: rows have no attributes");
  std::vector<std::vector<std::string>> categories(arity);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != arity)
      throw InvalidInput("onehot_features: row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
                         " attributes, expected " + std::to_string(arity));
    for (std::size_t a = 0; a < arity; ++a) {
      auto& seen = categories[a];
      if (std::find(seen.begin(), seen.end(), rows[r][a]) == seen.end()) seen.push_back(rows[r][a]);
    }
  }
  std::vector<Index> offset(arity + 1, 0);
  for (std::size_t a = 0; a < arity; ++a) offset[a + 1] = offset[a] + static_cast<Index>(categories[a].size());
  Matrix<double> x = Matrix<double>::Zero(static_cast<Index>(rows.size()), offset[arity]);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t a = 0; a < arity; ++a) {
      const auto& seen = categories[a];
      const auto pos = std::find(seen.begin(), seen.end(), rows[r][a]) - seen.begin();
      x(static_cast<Index>(r), offset[a] + pos) = 1.0;
    }
  return x;
}

CategoricalTable read_categorical_csv(std::istream& in, const std::string& source) {
  CategoricalTable out;
  std::string line;
  std::size_t number = 0;
  std::size_t arity = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    for (auto f : io::split_fields(line)) fields.emplace_back(f);
    if (fields.size() < 2) throw io::ParseError(source + ":" + std::to_string(number) + ": expected label and attributes");
    if (arity == 0) arity = fields.size();
    if (fields.size() != arity)
      throw io::ParseError(source + ":" + std::to_string(number) + ": expected " + std::to_string(arity) + " fields");
    out.labels.push_back(fields.front());
    out.attributes.emplace_back(fields.begin() + 1, fields.end());
  }
  if (out.labels.empty()) throw io::ParseError(source + ": no records");
  return out;
}

DatasetBundle mushroom_bundle(const CategoricalTable& table, Index subsample, std::uint64_t seed,
                              std::string provenance) {
  detail::require(table.labels.size() == table.attributes.size(), "mushroom_bundle: label count differs from records");
  std::vector<std::size_t> complete;
  for (std::size_t r = 0; r < table.attributes.size(); ++r) {
    const auto& a = table.attributes[r];
    if (std::find(a.begin(), a.end(), "?") == a.end()) complete.push_back(r);
  }
  const Index available = static_cast<Index>(complete.size());
  detail::require(subsample >= 2, "mushroom_bundle: subsample must be at least 2");
  std::vector<std::size_t> keep = complete;
  if (subsample < available) {
    const SamplingSet pick = uniform_sample(available, 1, subsample, seed);
    keep.clear();
    for (const auto& e : pick.entries()) keep.push_back(complete[static_cast<std::size_t>(e.row)]);
    std::sort(keep.begin(), keep.end());
  }
  detail::require(keep.size() >= 2, "mushroom_bundle: fewer than two complete records");

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> labels;
  for (auto r : keep) {
    rows.push_back(table.attributes[r]);
    labels.push_back(table.labels[r]);
  }
  DatasetBundle out;
  out.x = onehot_features(rows);
  out.y = out.x;
  const auto start = Clock::now();
  out.kx = pearson_kernel(*out.x);
  out.ky = out.kx;
  out.kernel_seconds = seconds_since(start);
  const Index n = static_cast<Index>(keep.size());
  out.f.resize(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i)
      out.f(i, j) = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)] ? 1.0 : -1.0;
  out.features = FeatureRecipe::Svd;
  out.name = "mushroom";
  out.provenance = std::move(provenance);
  return out;
}

CategoricalTable synthetic_categorical(Index records, std::uint64_t seed) {
  detail::require(records >= 1, "synthetic_categorical: need at least one record");
  constexpr int kAttributes = 22;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution label_draw(0.5);
  std::bernoulli_distribution typical(0.7);
  CategoricalTable out;
  for (Index r = 0; r < records; ++r) {
    const bool poisonous = label_draw(rng);
    out.labels.emplace_back(poisonous ? "p" : "e");
    std::vector<std::string> attrs;
    for (int a = 0; a < kAttributes; ++a) {
      const int cats = 2 + a % 5;
      std::uniform_int_distribution<int> any(0, cats - 1);
      const int preferred = poisonous ? (a % cats) : ((a + 1) % cats);
      const int c = typical(rng) ? preferred : any(rng);
      attrs.push_back("a" + std::to_string(a) + "c" + std::to_string(c));
    }
    out.attributes.push_back(std::move(attrs));
  }
  return out;
}

std::vector<double> default_mu_grid() {
  std::vector<double> g;
  for (int e = -6; e <= 2; ++e) g.push_back(std::pow(10.0, e));
  return g;
}

std::vector<double> default_eta_grid() { return {1e-2, 1e-1, 1.0, 1e1}; }

ExperimentConfig::ExperimentConfig() : mu_grid(default_mu_grid()), eta_grid(default_eta_grid()) {}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "method" || key == "methods") {
    methods.clear();
    for (const auto& m : split_list(value)) methods.push_back(parse_method(m));
    if (methods.empty()) throw InvalidInput("config key '" + key + "': empty list");
  } else if (key == "ps") {
    ps = parse_reals(key, value);
  } else if (key == "realizations") {
    realizations = parse_count(key, value);
  } else if (key == "mu") {
    mu_grid = parse_reals(key, value);
  } else if (key == "eta") {
    eta_grid = parse_reals(key, value);
  } else if (key == "rank") {
    rank = parse_count(key, value);
  } else if (key == "dim") {
    dim = parse_count(key, value);
  } else if (key == "snr") {
    snr = parse_real(key, value);
  } else if (key == "noise_variance") {
    noise_variance = parse_real(key, value);
  } else if (key == "seed") {
    seed = static_cast<std::uint64_t>(parse_count(key, value));
  } else if (key == "validation_fraction") {
    validation_fraction = parse_real(key, value);
  } else if (key == "epochs") {
    epochs = parse_count(key, value);
  } else if (key == "step_c") {
    step_c = parse_real(key, value);
  } else if (key == "step_n0") {
    step_n0 = parse_real(key, value);
  } else if (key == "stride") {
    stride = (value == "inf" || value == "none") ? 0 : parse_count(key, value);
  } else if (key == "max_iters") {
    max_iters = parse_count(key, value);
  } else if (key == "rel_tol") {
    rel_tol = parse_real(key, value);
  } else if (key == "dataset") {
    dataset = value;
  } else if (key == "n") {
    n = parse_count(key, value);
  } else if (key == "l") {
    l = parse_count(key, value);
  } else if (key == "graph_p") {
    graph_p = parse_real(key, value);
  } else if (key == "gen_eta") {
    gen_eta = parse_real(key, value);
  } else if (key == "data_seed") {
    data_seed = static_cast<std::uint64_t>(parse_count(key, value));
  } else if (key == "matrix") {
    matrix_path = value;
  } else if (key == "distances") {
    distances_path = value;
  } else if (key == "categorical") {
    categorical_path = value;
  } else if (key == "k_neighbors") {
    k_neighbors = parse_count(key, value);
  } else if (key == "day_width") {
    day_width = parse_count(key, value);
  } else if (key == "subsample") {
    subsample = parse_count(key, value);
  } else {
    throw InvalidInput("unknown config key '" + key + "'");
  }
}

void ExperimentConfig::validate() const {
  detail::require(!methods.empty(), "config: no method");
  detail::require(!ps.empty(), "config: ps grid is empty");
  for (double p : ps) detail::require(p > 0.0 && p <= 100.0, "config: every P_s must lie in (0, 100]");
  detail::require(realizations >= 1, "config: realizations must be at least 1");
  detail::require(!mu_grid.empty(), "config: mu grid is empty");
  for (double m : mu_grid) detail::require(std::isfinite(m) && m > 0.0, "config: every mu must be positive");
  detail::require(!eta_grid.empty(), "config: eta grid is empty");
  for (double e : eta_grid) detail::require(std::isfinite(e) && e > 0.0, "config: every eta must be positive");
  detail::require(rank >= 1, "config: rank must be at least 1");
  detail::require(dim >= 1, "config: dim must be at least 1");
  detail::require(snr >= 0.0 && noise_variance >= 0.0, "config: noise levels must be nonnegative");
  detail::require(!(snr > 0.0 && noise_variance > 0.0), "config: snr and noise_variance are mutually exclusive");
  detail::require(validation_fraction > 0.0 && validation_fraction < 1.0,
                  "config: validation_fraction must lie in (0, 1)");
  detail::require(!step_c || *step_c >= 0.0, "config: step_c must be nonnegative");
  detail::require(!step_n0 || *step_n0 > 0.0, "config: step_n0 must be positive");
  detail::require(rel_tol >= 0.0, "config: rel_tol must be nonnegative");
  detail::require(graph_p >= 0.0 && graph_p <= 1.0, "config: graph_p must lie in [0, 1]");
  detail::require(gen_eta > 0.0, "config: gen_eta must be positive");
}

NoiseSpec ExperimentConfig::noise(std::uint64_t s) const {
  if (snr > 0.0) return NoiseSpec::target_snr(snr, s);
  if (noise_variance > 0.0) return NoiseSpec::variance(noise_variance, s);
  return NoiseSpec::none();
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig config;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string at = source + ":" + std::to_string(number) + ": ";
    if (eq == std::string::npos) throw io::ParseError(at + "expected key=value");
    const std::string key = trim(line.substr(0, eq));
    try {
      config.set(key, trim(line.substr(eq + 1)));
    } catch (const InvalidInput& e) {
      throw io::ParseError(at + e.what());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  auto in = io::open_input(path);
  return parse_config(in, path);
}

DatasetBundle load_dataset(const ExperimentConfig& config) {
  const auto& d = config.dataset;
  if (d == "synthetic") return generate_synthetic(config.n, config.l, config.graph_p, config.gen_eta, config.data_seed);
  if (d == "temperature") {
    detail::require(!config.matrix_path.empty() && !config.distances_path.empty(),
                    "temperature dataset needs 'matrix' and 'distances' paths");
    return temperature_bundle(io::load_matrix_csv(config.matrix_path), io::load_matrix_csv(config.distances_path),
                              config.k_neighbors, config.day_width, config.gen_eta, config.matrix_path);
  }
  if (d == "temperature-synthetic") return synthetic_temperature(150, 365, config.data_seed);
  if (d == "mushroom") {
    detail::require(!config.categorical_path.empty(), "mushroom dataset needs a 'categorical' path");
    auto in = io::open_input(config.categorical_path);
    return mushroom_bundle(read_categorical_csv(in, config.categorical_path), config.subsample, config.data_seed,
                           config.categorical_path);
  }
  if (d == "mushroom-synthetic")
    return mushroom_bundle(synthetic_categorical(config.subsample, config.data_seed), config.subsample,
                           config.data_seed, "synthetic categorical seed=" + std::to_string(config.data_seed));
  throw InvalidInput("unknown dataset '" + d +
                     "' (expected synthetic, temperature, temperature-synthetic, mushroom or mushroom-synthetic)");
}

StepSchedule default_online_schedule(const FeatureMap<double>& features, const SamplingSet& s) {
  double top = 0.0;
  for (Index v : s.vec_indices()) top = std::max(top, static_cast<double>(features.row(v).squaredNorm()));
  const double t1 = top > 0.0 ? 1.0 / top : 1.0;
  const double n0 = 10.0 * static_cast<double>(std::max<Index>(s.size(), 1));
  return StepSchedule::decay(t1 * (1.0 + n0), n0);
}

FactorModel<double> data_scaled_factors(const ObservationSet<double>& obs, Index rank, std::uint64_t seed) {
  detail::require(rank >= 1, "data_scaled_factors: rank must be at least 1");
  const double power = obs.size() > 0 ? obs.values.squaredNorm() / static_cast<double>(obs.size()) : 0.0;
  auto [w, h] = random_factors<double>(obs.n_rows(), obs.n_cols(), rank, seed);
  // random_factors draws with variance 1/p; rescale to variance sqrt(power / p).
  const double gain = power > 0.0 ? std::pow(power * static_cast<double>(rank), 0.25) : 1.0;
  FactorModel<double> model;
  model.w = gain * w;
  model.h = gain * h;
  return model;
}

StepSchedule default_factor_schedule(const ObservationSet<double>& obs, Index rank, double mu) {
  const double power = obs.size() > 0 ? obs.values.squaredNorm() / static_cast<double>(obs.size()) : 0.0;
  const double row_sq = power > 0.0 ? std::sqrt(static_cast<double>(rank) * power) : 1.0;
  const auto [rw, cw] = entry_weights<double>(obs.sampling, mu);
  const double reg = std::max(rw.size() ? rw.maxCoeff() : 0.0, cw.size() ? cw.maxCoeff() : 0.0);
  const double t1 = 0.2 / (row_sq + reg);
  const double n0 = 10.0 * static_cast<double>(std::max<Index>(obs.size(), 1));
  return StepSchedule::decay(t1 * (1.0 + n0), n0);
}

FitOutcome fit_predict(Method method, const DatasetBundle& data, const KernelMatrix<double>& kx,
                       const KernelMatrix<double>& ky, const ObservationSet<double>& obs, double mu,
                       const ExperimentConfig& config, std::uint64_t seed) {
  FitOutcome out;
  switch (method) {
    case Method::Kkmcex: {
      auto kernel = std::make_shared<const KroneckerKernel<double>>(kx, ky);
      const auto start = Clock::now();
      out.estimate = kkmcex_predict(kkmcex_fit(kernel, obs, mu));
      out.seconds = seconds_since(start);
      break;
    }
    case Method::Rrmcex: {
      const auto start = Clock::now();
      auto fm = std::make_shared<const FeatureMap<double>>(data.feature_map(kx, ky, feature_dim(config, data)));
      out.estimate = rrmcex_predict(rrmcex_fit(fm, obs, mu));
      out.seconds = seconds_since(start);
      break;
    }
    case Method::Orrmcex: {
      const auto start = Clock::now();
      auto fm = std::make_shared<const FeatureMap<double>>(data.feature_map(kx, ky, feature_dim(config, data)));
      OnlineOptions<double> opt;
      opt.schedule = online_schedule(config, *fm, obs.sampling);
      opt.mu = mu;
      opt.epochs = config.epochs;
      opt.seed = seed;
      out.estimate = rrmcex_predict(orrmcex_run(fm, obs, opt));
      out.seconds = seconds_since(start);
      break;
    }
    case Method::Als: {
      AlsOptions opt;
      opt.rank = config.rank;
      opt.mu = mu;
      opt.max_iters = config.max_iters;
      opt.rel_tol = config.rel_tol;
      opt.seed = seed;
      const auto start = Clock::now();
      out.estimate = factor_predict(als_fit(obs, kx, ky, opt));
      out.seconds = seconds_since(start);
      break;
    }
    case Method::FactorSgd: {
      FactorSgdOptions opt;
      opt.rank = config.rank;
      opt.mu = mu;
      opt.schedule = factor_schedule(config, obs, mu);
      opt.epochs = config.epochs;
      opt.seed = seed;
      const auto start = Clock::now();
      out.estimate = factor_predict(factor_sgd_fit<double>(obs, opt, data_scaled_factors(obs, config.rank, seed)));
      out.seconds = seconds_since(start);
      break;
    }
  }
  return out;
}

GridChoice grid_search(const ExperimentConfig& config, const DatasetBundle& data, Method method,
                       const ObservationSet<double>& obs, double validation_fraction, std::uint64_t seed) {
  detail::require(validation_fraction > 0.0 && validation_fraction < 1.0,
                  "grid_search: validation fraction must lie in (0, 1)");
  detail::require(!config.mu_grid.empty() && !config.eta_grid.empty(), "grid_search: grids must be nonempty");
  const Index total = obs.size();
  const Index held = static_cast<Index>(std::llround(validation_fraction * static_cast<double>(total)));
  if (held < 1 || held >= total)
    throw InvalidInput("grid_search: validation split of " + std::to_string(held) + " out of " +
                       std::to_string(total) + " observations leaves an empty side");

  const bool eta_fixed = config.eta_grid.size() == 1 || !data.tunable_eta();
  if (config.mu_grid.size() == 1 && eta_fixed)
    return {config.mu_grid.front(), config.eta_grid.front(), std::numeric_limits<double>::quiet_NaN()};

  std::vector<Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::vector<Index> val_pos(order.begin(), order.begin() + held);
  const std::vector<Index> train_pos(order.begin() + held, order.end());
  const ObservationSet<double> train = obs.subset(train_pos);
  const ObservationSet<double> val = obs.subset(val_pos);
  const double val_power = val.values.squaredNorm();

  // The online method is tuned through its batch counterpart, which shares the objective.
  const Method fit_method = method == Method::Orrmcex ? Method::Rrmcex : method;
  std::vector<double> mus = config.mu_grid;
  std::sort(mus.begin(), mus.end(), std::greater<>());
  const std::vector<double> etas = eta_fixed ? std::vector<double>{config.eta_grid.front()} : config.eta_grid;

  GridChoice best{mus.front(), etas.front(), std::numeric_limits<double>::infinity()};
  for (double eta : etas) {
    const auto [kx, ky] = data.kernels_for(eta);
    for (double mu : mus) {
      Matrix<double> est;
      try {
        est = fit_predict(fit_method, data, kx, ky, train, mu, config, seed).estimate;
      } catch (const NumericalError&) {
        continue;  // a diverging or singular grid point never wins
      }
      double err = 0.0;
      for (Index k = 0; k < val.size(); ++k) {
        const double r = est(val.sampling[k].row, val.sampling[k].col) - val.values(k);
        err += r * r;
      }
      const double score = val_power > 0.0 ? err / val_power : err / static_cast<double>(val.size());
      if (score < best.score) best = {mu, eta, score};
    }
  }
  if (!std::isfinite(best.score)) throw NumericalError("grid_search: no grid point produced a finite fit");
  return best;
}

ObservationSet<double> realization_observations(const ExperimentConfig& config, const DatasetBundle& data,
                                                std::size_t ps_index, Index realization) {
  detail::require(ps_index < config.ps.size(), "realization_observations: P_s index out of range");
  const Index total = data.n_rows() * data.n_cols();
  const Index count = static_cast<Index>(std::llround(config.ps[ps_index] / 100.0 * static_cast<double>(total)));
  detail::require(count >= 1 && count <= total,
                  "P_s=" + io::format_number(config.ps[ps_index]) + " yields no observed entries");
  const SamplingSet s =
      uniform_sample(data.n_rows(), data.n_cols(), count, stream_seed(config.seed, ps_index, realization, kSampling));
  return observe(data.f, s, config.noise(stream_seed(config.seed, ps_index, realization, kNoise)));
}

GridChoice grid_search(const ExperimentConfig& config, const DatasetBundle& data, double validation_fraction) {
  config.validate();
  const auto obs = realization_observations(config, data, 0, 0);
  return grid_search(config, data, config.methods.front(), obs, validation_fraction,
                     stream_seed(config.seed, 0, 0, kSplit));
}

ExperimentResult run_sweep(const ExperimentConfig& config, const DatasetBundle& data, const SweepOptions& options) {
  config.validate();
  ExperimentResult result;
  for (Method method : config.methods) {
    for (std::size_t pi = 0; pi < config.ps.size(); ++pi) {
      const double ps = config.ps[pi];
      GridChoice choice{config.mu_grid.front(), config.eta_grid.front(), 0.0};
      try {
        const auto first = realization_observations(config, data, pi, 0);
        choice = grid_search(config, data, method, first, config.validation_fraction,
                             stream_seed(config.seed, pi, 0, kSplit));
      } catch (const std::exception&) {
        rethrow_annotated(method, ps, 0);
      }
      const auto [kx, ky] = data.kernels_for(choice.eta);
      SummaryRow summary{method, ps, 0.0, 0.0, choice.mu, std::nullopt};
      if (data.tunable_eta()) summary.eta = choice.eta;
      for (Index r = 0; r < config.realizations; ++r) {
        ResultRow row{method, ps, r, 0.0, 0.0, choice.mu, summary.eta};
        try {
          const auto obs = realization_observations(config, data, pi, r);
          FitOutcome fit =
              fit_predict(method, data, kx, ky, obs, choice.mu, config, stream_seed(config.seed, pi, r, kSolver));
          row.nmse = nmse(fit.estimate, data.f);
          row.seconds = fit.seconds;
          if (options.keep_estimates) result.estimates.push_back(std::move(fit.estimate));
        } catch (const std::exception&) {
          rethrow_annotated(method, ps, r);
        }
        summary.nmse += row.nmse / static_cast<double>(config.realizations);
        summary.seconds += row.seconds / static_cast<double>(config.realizations);
        result.rows.push_back(row);
        if (options.progress) options.progress(row);
      }
      result.summary.push_back(summary);
    }
  }
  return result;
}

void write_results_csv(std::ostream& out, const ExperimentResult& result) {
  out << "method,P_s,realization,nmse,seconds,mu,eta\n";
  for (const auto& r : result.rows) {
    out << to_string(r.method) << ',' << io::format_number(r.ps) << ',' << r.realization + 1 << ','
        << io::format_number(r.nmse) << ',' << io::format_number(r.seconds) << ',' << io::format_number(r.mu) << ','
        << (r.eta ? io::format_number(*r.eta) : std::string()) << '\n';
  }
}

OnlineTrace run_online(const ExperimentConfig& config, const DatasetBundle& data) {
  config.validate();
  const auto it = std::find_if(config.methods.begin(), config.methods.end(),
                               [](Method m) { return m == Method::Orrmcex || m == Method::FactorSgd; });
  detail::require(it != config.methods.end(), "run_online: method must be orrmcex or factor_sgd");
  const Method method = *it;
  const auto obs = realization_observations(config, data, 0, 0);
  const GridChoice choice =
      grid_search(config, data, method, obs, config.validation_fraction, stream_seed(config.seed, 0, 0, kSplit));
  const auto [kx, ky] = data.kernels_for(choice.eta);

  OnlineTrace trace{method, config.ps.front(), choice.mu, std::nullopt, {}};
  if (data.tunable_eta()) trace.eta = choice.eta;
  const std::uint64_t seed = stream_seed(config.seed, 0, 0, kSolver);
  const std::int64_t total = static_cast<std::int64_t>(obs.size()) * config.epochs;
  double elapsed = 0.0;
  auto resume = Clock::now();
  auto record = [&](std::int64_t n, const Matrix<double>& estimate) {
    elapsed += seconds_since(resume);
    trace.points.push_back({n, elapsed, nmse(estimate, data.f)});
    resume = Clock::now();
  };

  if (method == Method::Orrmcex) {
    auto fm = std::make_shared<const FeatureMap<double>>(data.feature_map(kx, ky, feature_dim(config, data)));
    OnlineOptions<double> opt;
    opt.schedule = online_schedule(config, *fm, obs.sampling);
    opt.mu = choice.mu;
    opt.epochs = config.epochs;
    opt.seed = seed;
    opt.reshuffle = false;
    opt.stride = config.stride;
    opt.hook = [&](std::int64_t n, const RrmcexModel<double>& m) { record(n, rrmcex_predict(m)); };
    if (config.stride > 0) record(0, Matrix<double>::Zero(data.n_rows(), data.n_cols()));
    resume = Clock::now();
    const auto model = orrmcex_run(fm, obs, opt);
    if (config.stride == 0 || total == 0) record(total, rrmcex_predict(model));
    return trace;
  }

  FactorModel<double> model = data_scaled_factors(obs, config.rank, seed);
  model.mu = choice.mu;
  const auto [rw, cw] = entry_weights<double>(obs.sampling, choice.mu);
  const StepSchedule schedule = factor_schedule(config, obs, choice.mu);
  std::vector<Index> order(static_cast<std::size_t>(obs.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(detail::mix_seed(seed, 1));
  std::shuffle(order.begin(), order.end(), rng);
  if (config.stride > 0) record(0, factor_predict(model));
  resume = Clock::now();
  std::int64_t n = 0;
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    for (Index k : order) {
      const Entry& e = obs.sampling[k];
      factor_sgd_step(model, e.row, e.col, obs.values(k), schedule.at(++n), rw(e.row), cw(e.col));
      if (config.stride > 0 && (n % config.stride == 0 || n == total)) record(n, factor_predict(model));
    }
  }
  if (config.stride == 0 || total == 0) record(total, factor_predict(model));
  return trace;
}

void write_trace_csv(std::ostream& out, const OnlineTrace& trace) {
  out << "method,iteration,seconds,nmse\n";
  for (const auto& p : trace.points)
    out << to_string(trace.method) << ',' << p.iteration << ',' << io::format_number(p.seconds) << ','
        << io::format_number(p.nmse) << '\n';
}

}  // namespace kmcex::bench
