#pragma once

// Sampling sets, the observation operator and additive noise.
//
// Indices are zero-based throughout the library. Entry (i, j) of an N x L matrix
// has column-major vectorization index j * N + i. CSV files use one-based indices
// and are converted at the I/O boundary.

#include "kmcex/common.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>
#include <variant>
#include <vector>

namespace kmcex {

struct Entry {
  Index row = 0;
  Index col = 0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

/// Column-major vectorization index of entry (i, j) in a matrix with `n_rows` rows.
inline Index vec_index(Index i, Index j, Index n_rows) {
  if (n_rows < 1 || i < 0 || i >= n_rows || j < 0)
    throw IndexError("vec_index: entry (" + std::to_string(i) + ", " + std::to_string(j) +
                     ") out of range for " + std::to_string(n_rows) + " rows");
  return j * n_rows + i;
}

/// Ordered set of distinct observed entries. The order defines the rows of the
/// binary selector S and of every S-indexed object built from the set.
class SamplingSet {
 public:
  SamplingSet() = default;

  SamplingSet(Index n_rows, Index n_cols, std::vector<Entry> entries)
      : n_rows_(n_rows), n_cols_(n_cols), entries_(std::move(entries)) {
    detail::require(n_rows_ >= 1 && n_cols_ >= 1, "SamplingSet: dimensions must be positive");
    vec_.reserve(entries_.size());
    std::unordered_set<Index> seen;
    seen.reserve(entries_.size() * 2);
    for (const auto& e : entries_) {
      if (e.row < 0 || e.row >= n_rows_ || e.col < 0 || e.col >= n_cols_)
        throw IndexError("SamplingSet: entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                         ") out of bounds");
      const Index v = e.col * n_rows_ + e.row;
      if (!seen.insert(v).second)
        throw InvalidInput("SamplingSet: duplicate entry (" + std::to_string(e.row) + ", " +
                           std::to_string(e.col) + ")");
      vec_.push_back(v);
    }
  }

  [[nodiscard]] Index n_rows() const { return n_rows_; }
  [[nodiscard]] Index n_cols() const { return n_cols_; }
  [[nodiscard]] Index size() const { return static_cast<Index>(entries_.size()); }
  [[nodiscard]] bool empty() const { return entries_.empty(); }
  [[nodiscard]] const std::vector<Entry>& entries() const { return entries_; }
  [[nodiscard]] const Entry& operator[](Index k) const { return entries_[static_cast<std::size_t>(k)]; }
  /// Vectorization indices in sampling order.
  [[nodiscard]] const std::vector<Index>& vec_indices() const { return vec_; }

  /// Percentage of observed entries, 100 S / (N L).
  [[nodiscard]] double percent_observed() const {
    return 100.0 * static_cast<double>(size()) / static_cast<double>(n_rows_ * n_cols_);
  }

  /// Explicit S x NL binary selector; intended for small verification problems.
  template <typename Scalar = double>
  [[nodiscard]] Matrix<Scalar> selector() const {
    Matrix<Scalar> s = Matrix<Scalar>::Zero(size(), n_rows_ * n_cols_);
    for (Index k = 0; k < size(); ++k) s(k, vec_[static_cast<std::size_t>(k)]) = Scalar(1);
    return s;
  }

  /// Subset in the given order of positions.
  [[nodiscard]] SamplingSet subset(const std::vector<Index>& positions) const {
    std::vector<Entry> picked;
    picked.reserve(positions.size());
    for (Index p : positions) picked.push_back(entries_.at(static_cast<std::size_t>(p)));
    return SamplingSet(n_rows_, n_cols_, std::move(picked));
  }

 private:
  Index n_rows_ = 0;
  Index n_cols_ = 0;
  std::vector<Entry> entries_;
  std::vector<Index> vec_;
};

/// Every entry of an N x L grid in vectorization order.
inline SamplingSet full_sampling(Index n_rows, Index n_cols) {
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(n_rows * n_cols));
  for (Index j = 0; j < n_cols; ++j)
    for (Index i = 0; i < n_rows; ++i) entries.push_back({i, j});
  return SamplingSet(n_rows, n_cols, std::move(entries));
}

/// `count` distinct entries drawn uniformly without replacement; the draw order is kept.
inline SamplingSet uniform_sample(Index n_rows, Index n_cols, Index count, std::uint64_t seed) {
  detail::require(n_rows >= 1 && n_cols >= 1, "uniform_sample: dimensions must be positive");
  const Index total = n_rows * n_cols;
  detail::require(count >= 0 && count <= total, "uniform_sample: count must lie in [0, N L]");
  std::vector<Index> pool(static_cast<std::size_t>(total));
  std::iota(pool.begin(), pool.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(count));
  // partial Fisher-Yates
  for (Index k = 0; k < count; ++k) {
    std::uniform_int_distribution<Index> pick(k, total - 1);
    std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(pick(rng))]);
    const Index v = pool[static_cast<std::size_t>(k)];
    entries.push_back({v % n_rows, v / n_rows});
  }
  return SamplingSet(n_rows, n_cols, std::move(entries));
}

struct NoNoise {};
struct NoiseVariance {
  double nu_sq = 0.0;
};
struct NoiseTargetSnr {
  double snr = 1.0;
};

/// Additive iid Gaussian noise. The noise matrix is drawn over the full grid and
/// then sampled, so the snr refers to ||F||_F^2 / ||E||_F^2 over the whole matrix.
struct NoiseSpec {
  std::variant<NoNoise, NoiseVariance, NoiseTargetSnr> mode{NoNoise{}};
  std::uint64_t seed = 0;

  static NoiseSpec none() { return {}; }
  static NoiseSpec variance(double nu_sq, std::uint64_t seed) {
    detail::require(nu_sq >= 0.0 && std::isfinite(nu_sq), "NoiseSpec: variance must be nonnegative");
    return {NoiseVariance{nu_sq}, seed};
  }
  static NoiseSpec target_snr(double snr, std::uint64_t seed) {
    detail::require(snr > 0.0 && std::isfinite(snr), "NoiseSpec: snr must be positive");
    return {NoiseTargetSnr{snr}, seed};
  }
};

template <typename Scalar>
Matrix<Scalar> standard_normal_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix<Scalar> z(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) z(i, j) = static_cast<Scalar>(normal(rng));
  return z;
}

/// Full noise matrix E for an N x L signal.
template <typename Derived>
Matrix<typename Derived::Scalar> noise_matrix(const Eigen::MatrixBase<Derived>& signal, const NoiseSpec& noise) {
  using Scalar = typename Derived::Scalar;
  if (std::holds_alternative<NoNoise>(noise.mode)) return Matrix<Scalar>::Zero(signal.rows(), signal.cols());
  std::mt19937_64 rng(noise.seed);
  Matrix<Scalar> e = standard_normal_matrix<Scalar>(signal.rows(), signal.cols(), rng);
  if (const auto* v = std::get_if<NoiseVariance>(&noise.mode)) {
    e *= static_cast<Scalar>(std::sqrt(v->nu_sq));
  } else {
    const auto& t = std::get<NoiseTargetSnr>(noise.mode);
    const Scalar e_sq = e.squaredNorm();
    const Scalar f_sq = signal.squaredNorm();
    e *= e_sq > Scalar(0) ? std::sqrt(f_sq / (static_cast<Scalar>(t.snr) * e_sq)) : Scalar(0);
  }
  return e;
}

/// Observed values m_bar = S vec(F + E), in sampling order.
template <typename Scalar = double>
struct ObservationSet {
  SamplingSet sampling;
  Vector<Scalar> values;

  ObservationSet() = default;
  ObservationSet(SamplingSet s, Vector<Scalar> v) : sampling(std::move(s)), values(std::move(v)) {
    detail::require(values.size() == sampling.size(), "ObservationSet: value count must equal |Omega|");
  }

  [[nodiscard]] Index size() const { return sampling.size(); }
  [[nodiscard]] Index n_rows() const { return sampling.n_rows(); }
  [[nodiscard]] Index n_cols() const { return sampling.n_cols(); }

  [[nodiscard]] ObservationSet subset(const std::vector<Index>& positions) const {
    Vector<Scalar> v(static_cast<Index>(positions.size()));
    for (std::size_t k = 0; k < positions.size(); ++k) v(static_cast<Index>(k)) = values(positions[k]);
    return ObservationSet(sampling.subset(positions), std::move(v));
  }
};

template <typename Derived>
ObservationSet<typename Derived::Scalar> observe(const Eigen::MatrixBase<Derived>& signal, const SamplingSet& s,
                                                 const NoiseSpec& noise = NoiseSpec::none()) {
  using Scalar = typename Derived::Scalar;
  if (signal.rows() != s.n_rows() || signal.cols() != s.n_cols())
    throw InvalidInput("observe: matrix shape does not match the sampling set");
  const Matrix<Scalar> corrupted = signal + noise_matrix(signal, noise);
  Vector<Scalar> values(s.size());
  for (Index k = 0; k < s.size(); ++k) values(k) = corrupted(s[k].row, s[k].col);
  return ObservationSet<Scalar>(s, std::move(values));
}

/// P_Omega of the observations: an N x L matrix that is zero off the sampling set.
template <typename Scalar>
Matrix<Scalar> masked_matrix(const ObservationSet<Scalar>& obs) {
  Matrix<Scalar> m = Matrix<Scalar>::Zero(obs.n_rows(), obs.n_cols());
  for (Index k = 0; k < obs.size(); ++k) m(obs.sampling[k].row, obs.sampling[k].col) = obs.values(k);
  return m;
}

}  // namespace kmcex
