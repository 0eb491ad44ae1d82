#pragma once

// Kernel matrices, the lazily evaluated Kronecker kernel K_z = K_y (x) K_x, and
// low-rank feature maps whose Gram matrix approximates K_z.

#include "kmcex/common.hpp"
#include "kmcex/graphs.hpp"
#include "kmcex/sampling.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

namespace kmcex {

/// Symmetric positive semidefinite similarity matrix.
template <typename Scalar = double>
class KernelMatrix {
 public:
  KernelMatrix() = default;

  /// Validates symmetry and the PSD condition
  /// min eig >= -1e-8 max(1, max eig). Slight asymmetry from round-off is removed.
  explicit KernelMatrix(Matrix<Scalar> m) : matrix_(std::move(m)) {
    detail::require(matrix_.rows() == matrix_.cols() && matrix_.rows() >= 1,
                    "KernelMatrix: matrix must be square and nonempty");
    detail::require(matrix_.allFinite(), "KernelMatrix: non-finite entries");
    detail::require(detail::is_symmetric(matrix_, Scalar(1e-10)), "KernelMatrix: matrix is not symmetric");
    matrix_ = (Scalar(0.5) * (matrix_ + matrix_.transpose())).eval();
    Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(matrix_, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success) throw NumericalError("KernelMatrix: eigenvalue computation failed");
    const Scalar lo = eig.eigenvalues().minCoeff();
    const Scalar hi = eig.eigenvalues().maxCoeff();
    detail::require(lo >= -Scalar(1e-8) * std::max(Scalar(1), hi),
                    "KernelMatrix: matrix is not positive semidefinite (min eigenvalue " + std::to_string(lo) +
                        ")");
  }

  [[nodiscard]] Index side() const { return matrix_.rows(); }
  [[nodiscard]] const Matrix<Scalar>& matrix() const { return matrix_; }
  [[nodiscard]] Scalar operator()(Index i, Index j) const { return matrix_(i, j); }

 private:
  Matrix<Scalar> matrix_;
};

struct Diffusion {
  double eta = 1.0;
};
struct RegularizedLaplacian {
  double eta = 1.0;
};
/// Ideal band-pass: unit gain on the listed (zero-based, ascending-eigenvalue) indices.
struct Bandlimited {
  std::vector<Index> pass_band;
};

using SpectralWeighting = std::variant<Diffusion, RegularizedLaplacian, Bandlimited>;

namespace detail {

inline void validate(const SpectralWeighting& w, Index n) {
  if (const auto* d = std::get_if<Diffusion>(&w)) {
    require(d->eta > 0.0, "diffusion weighting needs eta > 0");
  } else if (const auto* r = std::get_if<RegularizedLaplacian>(&w)) {
    require(r->eta > 0.0, "regularized Laplacian weighting needs eta > 0");
  } else {
    const auto& band = std::get<Bandlimited>(w).pass_band;
    require(!band.empty(), "bandlimited weighting needs a nonempty pass band");
    for (Index k : band) require(k >= 0 && k < n, "bandlimited pass-band index out of range");
  }
}

}  // namespace detail

/// K = Q r^dagger(Lambda) Q^T with eigenvalues sorted ascending.
template <typename Scalar>
KernelMatrix<Scalar> spectral_kernel(const Laplacian<Scalar>& lap, const SpectralWeighting& weighting) {
  const Index n = lap.size();
  detail::require(n >= 1 && lap.matrix.cols() == n, "spectral_kernel: Laplacian must be square");
  detail::validate(weighting, n);
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(lap.matrix);
  if (eig.info() != Eigen::Success) throw NumericalError("spectral_kernel: eigendecomposition failed");

  Vector<Scalar> gain(n);
  if (const auto* b = std::get_if<Bandlimited>(&weighting)) {
    gain.setZero();
    for (Index k : b->pass_band) gain(k) = Scalar(1);
  } else {
    for (Index k = 0; k < n; ++k) {
      const double lambda = static_cast<double>(eig.eigenvalues()(k));
      const double r = std::holds_alternative<Diffusion>(weighting)
                           ? std::exp(std::get<Diffusion>(weighting).eta * lambda)
                           : 1.0 + std::get<RegularizedLaplacian>(weighting).eta * lambda;
      if (!(r > 0.0) || !std::isfinite(r))
        throw NumericalError("spectral_kernel: weighting function vanishes at eigenvalue " + std::to_string(lambda));
      gain(k) = static_cast<Scalar>(1.0 / r);
    }
  }
  const auto& q = eig.eigenvectors();
  Matrix<Scalar> k = q * gain.asDiagonal() * q.transpose();
  return KernelMatrix<Scalar>((Scalar(0.5) * (k + k.transpose())).eval());
}

/// K = X X^T.
template <typename Derived>
KernelMatrix<typename Derived::Scalar> linear_kernel(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  detail::require(x.rows() >= 1 && x.cols() >= 1, "linear_kernel: feature matrix must be nonempty");
  Matrix<Scalar> k = Matrix<Scalar>::Zero(x.rows(), x.rows());
  k.template selfadjointView<Eigen::Lower>().rankUpdate(x.derived());
  return KernelMatrix<Scalar>(k.template selfadjointView<Eigen::Lower>());
}

/// K_ij = exp(-||x_i - x_j||^2 / (2 eta)).
template <typename Derived>
KernelMatrix<typename Derived::Scalar> gaussian_kernel(const Eigen::MatrixBase<Derived>& x, double eta) {
  using Scalar = typename Derived::Scalar;
  detail::require(eta > 0.0, "gaussian_kernel: eta must be positive");
  detail::require(x.rows() >= 1 && x.cols() >= 1, "gaussian_kernel: feature matrix must be nonempty");
  const Index n = x.rows();
  Matrix<Scalar> k(n, n);
  for (Index j = 0; j < n; ++j) {
    k(j, j) = Scalar(1);
    for (Index i = j + 1; i < n; ++i) {
      const Scalar d2 = (x.row(i) - x.row(j)).squaredNorm();
      k(i, j) = k(j, i) = std::exp(-d2 / static_cast<Scalar>(2.0 * eta));
    }
  }
  return KernelMatrix<Scalar>(std::move(k));
}

/// Pearson correlation between rows: the Gram matrix of centred, unit-norm rows.
template <typename Derived>
KernelMatrix<typename Derived::Scalar> pearson_kernel(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  detail::require(x.rows() >= 1 && x.cols() >= 2, "pearson_kernel: need at least two features per row");
  Matrix<Scalar> z = x.colwise() - x.rowwise().mean();
  for (Index i = 0; i < z.rows(); ++i) {
    const Scalar norm = z.row(i).norm();
    const Scalar scale = x.row(i).cwiseAbs().maxCoeff();
    if (!(norm > Scalar(64) * std::numeric_limits<Scalar>::epsilon() * scale) || norm == Scalar(0))
      throw InvalidInput("pearson_kernel: row " + std::to_string(i) + " is constant");
    z.row(i) /= norm;
  }
  Matrix<Scalar> k = z * z.transpose();
  k.diagonal().setOnes();
  return KernelMatrix<Scalar>(std::move(k));
}

/// K_z = K_y (x) K_x, stored as its two factors. Index r of the NL-dimensional
/// space decodes to entry (r mod N, r div N) of the N x L grid.
template <typename Scalar = double>
class KroneckerKernel {
 public:
  KroneckerKernel() = default;
  KroneckerKernel(KernelMatrix<Scalar> kx, KernelMatrix<Scalar> ky) : kx_(std::move(kx)), ky_(std::move(ky)) {}

  [[nodiscard]] const KernelMatrix<Scalar>& kx() const { return kx_; }
  [[nodiscard]] const KernelMatrix<Scalar>& ky() const { return ky_; }
  [[nodiscard]] Index n_rows() const { return kx_.side(); }
  [[nodiscard]] Index n_cols() const { return ky_.side(); }
  [[nodiscard]] Index size() const { return n_rows() * n_cols(); }

  [[nodiscard]] Scalar entry(Index r, Index c) const {
    const Index total = size();
    if (r < 0 || r >= total || c < 0 || c >= total)
      throw IndexError("KroneckerKernel: index (" + std::to_string(r) + ", " + std::to_string(c) +
                       ") out of range for size " + std::to_string(total));
    const Index n = n_rows();
    return kx_(r % n, c % n) * ky_(r / n, c / n);
  }

  /// kappa_x(x_i, x_n) kappa_y(y_j, y_l) for grid entries a = (i, j), b = (n, l).
  [[nodiscard]] Scalar entry(const Entry& a, const Entry& b) const {
    return kx_(a.row, b.row) * ky_(a.col, b.col);
  }

  /// Dense NL x NL matrix; only for small verification problems.
  [[nodiscard]] Matrix<Scalar> dense() const {
    const Index n = n_rows();
    const Index l = n_cols();
    Matrix<Scalar> kz(n * l, n * l);
    for (Index b = 0; b < l; ++b)
      for (Index a = 0; a < l; ++a) kz.block(a * n, b * n, n, n) = ky_(a, b) * kx_.matrix();
    return kz;
  }

 private:
  KernelMatrix<Scalar> kx_;
  KernelMatrix<Scalar> ky_;
};

template <typename Scalar>
void check_compatible(const KroneckerKernel<Scalar>& kk, const SamplingSet& s) {
  if (s.n_rows() != kk.n_rows() || s.n_cols() != kk.n_cols())
    throw InvalidInput("sampling set dimensions " + std::to_string(s.n_rows()) + "x" + std::to_string(s.n_cols()) +
                       " do not match kernel dimensions " + std::to_string(kk.n_rows()) + "x" +
                       std::to_string(kk.n_cols()));
}

/// S K_z S^T in sampling order, evaluated entrywise in O(S^2).
template <typename Scalar>
Matrix<Scalar> kron_submatrix(const KroneckerKernel<Scalar>& kk, const SamplingSet& s) {
  check_compatible(kk, s);
  const Index count = s.size();
  const auto& kx = kk.kx().matrix();
  const auto& ky = kk.ky().matrix();
  Matrix<Scalar> g(count, count);
  for (Index c = 0; c < count; ++c) {
    const Entry& b = s[c];
    for (Index r = c; r < count; ++r) {
      const Entry& a = s[r];
      g(r, c) = kx(a.row, b.row) * ky(a.col, b.col);
    }
  }
  g.template triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

/// K_z S^T: the columns of K_z at the sampled vectorization indices.
template <typename Scalar>
Matrix<Scalar> kron_times_selector(const KroneckerKernel<Scalar>& kk, const SamplingSet& s) {
  check_compatible(kk, s);
  const Index n = kk.n_rows();
  const Index l = kk.n_cols();
  const auto& kx = kk.kx().matrix();
  const auto& ky = kk.ky().matrix();
  Matrix<Scalar> out(n * l, s.size());
  for (Index c = 0; c < s.size(); ++c) {
    const Entry& b = s[c];
    for (Index j = 0; j < l; ++j) out.col(c).segment(j * n, n) = ky(j, b.col) * kx.col(b.row);
  }
  return out;
}

/// K_z vec(C) returned as the N x L matrix K_x C K_y.
template <typename Scalar, typename Derived>
Matrix<Scalar> kron_apply(const KroneckerKernel<Scalar>& kk, const Eigen::MatrixBase<Derived>& coeffs) {
  detail::require(coeffs.rows() == kk.n_rows() && coeffs.cols() == kk.n_cols(),
                  "kron_apply: coefficient matrix shape mismatch");
  return kk.kx().matrix() * (coeffs * kk.ky().matrix());
}

enum class FeatureProvenance { Eig, Svd, Explicit };

inline const char* to_string(FeatureProvenance p) {
  switch (p) {
    case FeatureProvenance::Eig:
      return "eig";
    case FeatureProvenance::Svd:
      return "svd";
    case FeatureProvenance::Explicit:
      return "explicit";
  }
  return "explicit";
}

inline FeatureProvenance parse_provenance(const std::string& s) {
  if (s == "eig") return FeatureProvenance::Eig;
  if (s == "svd") return FeatureProvenance::Svd;
  if (s == "explicit") return FeatureProvenance::Explicit;
  throw InvalidInput("unknown feature-map provenance '" + s + "'");
}

/// NL x d feature matrix, rows in vectorization order, with Phi Phi^T ~ K_z.
/// Stored row-major so the feature vector of one entry is contiguous.
template <typename Scalar = double>
class FeatureMap {
 public:
  FeatureMap() = default;

  FeatureMap(Index n_rows, Index n_cols, RowMajorMatrix<Scalar> phi, FeatureProvenance provenance)
      : n_rows_(n_rows), n_cols_(n_cols), phi_(std::move(phi)), provenance_(provenance) {
    detail::require(n_rows_ >= 1 && n_cols_ >= 1, "FeatureMap: dimensions must be positive");
    detail::require(phi_.rows() == n_rows_ * n_cols_, "FeatureMap: phi must have N L rows");
    detail::require(phi_.cols() >= 1 && phi_.cols() <= phi_.rows(), "FeatureMap: need 1 <= d <= N L");
    detail::require(phi_.allFinite(), "FeatureMap: non-finite entries");
  }

  [[nodiscard]] Index n_rows() const { return n_rows_; }
  [[nodiscard]] Index n_cols() const { return n_cols_; }
  [[nodiscard]] Index dim() const { return phi_.cols(); }
  [[nodiscard]] const RowMajorMatrix<Scalar>& phi() const { return phi_; }
  [[nodiscard]] FeatureProvenance provenance() const { return provenance_; }
  [[nodiscard]] auto row(Index vec) const { return phi_.row(vec); }

  [[nodiscard]] Matrix<Scalar> gram() const { return phi_ * phi_.transpose(); }

 private:
  Index n_rows_ = 0;
  Index n_cols_ = 0;
  RowMajorMatrix<Scalar> phi_;
  FeatureProvenance provenance_ = FeatureProvenance::Explicit;
};

namespace detail {

struct RankedPair {
  Index outer = 0;  // index into the column-side (y) spectrum
  Index inner = 0;  // index into the row-side (x) spectrum
};

// Top-d products a_outer * b_inner, descending; ties resolve to the smaller
// composite index outer * |b| + inner.
template <typename Scalar>
std::vector<RankedPair> top_products(const Vector<Scalar>& outer_vals, const Vector<Scalar>& inner_vals, Index d) {
  const Index no = outer_vals.size();
  const Index ni = inner_vals.size();
  std::vector<Index> idx(static_cast<std::size_t>(no * ni));
  std::iota(idx.begin(), idx.end(), Index{0});
  auto value = [&](Index c) { return outer_vals(c / ni) * inner_vals(c % ni); };
  auto before = [&](Index a, Index b) {
    const Scalar va = value(a);
    const Scalar vb = value(b);
    return va > vb || (va == vb && a < b);
  };
  const Index take = std::min<Index>(d, no * ni);
  std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), before);
  std::vector<RankedPair> out;
  out.reserve(static_cast<std::size_t>(take));
  for (Index k = 0; k < take; ++k) out.push_back({idx[static_cast<std::size_t>(k)] / ni, idx[static_cast<std::size_t>(k)] % ni});
  return out;
}

// Zero spectral values at round-off level relative to the largest one.
template <typename Scalar>
Vector<Scalar> clamp_spectrum(Vector<Scalar> v, Index n) {
  const Scalar top = v.size() > 0 ? v.cwiseAbs().maxCoeff() : Scalar(0);
  const Scalar floor = static_cast<Scalar>(n) * std::numeric_limits<Scalar>::epsilon() * top;
  for (Index k = 0; k < v.size(); ++k)
    if (v(k) <= floor) v(k) = Scalar(0);
  return v;
}

}  // namespace detail

/// Top-d eigenpairs of K_y (x) K_x from the factor eigendecompositions.
/// Column c of Phi is sqrt(sigma_y sigma_x) (q_y (x) q_x) for the c-th largest product.
template <typename Scalar>
FeatureMap<Scalar> features_from_eig(const KernelMatrix<Scalar>& kx, const KernelMatrix<Scalar>& ky, Index d) {
  const Index n = kx.side();
  const Index l = ky.side();
  detail::require(d >= 1 && d <= n * l, "features_from_eig: d must lie in [1, N L]");
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> ex(kx.matrix());
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> ey(ky.matrix());
  if (ex.info() != Eigen::Success || ey.info() != Eigen::Success)
    throw NumericalError("features_from_eig: eigendecomposition failed");
  const Vector<Scalar> sx = detail::clamp_spectrum<Scalar>(ex.eigenvalues(), n);
  const Vector<Scalar> sy = detail::clamp_spectrum<Scalar>(ey.eigenvalues(), l);
  const auto& qx = ex.eigenvectors();
  const auto& qy = ey.eigenvectors();

  const auto ranked = detail::top_products<Scalar>(sy, sx, d);
  RowMajorMatrix<Scalar> phi(n * l, d);
  for (Index c = 0; c < d; ++c) {
    const auto& p = ranked[static_cast<std::size_t>(c)];
    const Scalar w = std::sqrt(sy(p.outer) * sx(p.inner));
    for (Index j = 0; j < l; ++j) {
      const Scalar wy = w * qy(j, p.outer);
      for (Index i = 0; i < n; ++i) phi(j * n + i, c) = wy * qx(i, p.inner);
    }
  }
  return FeatureMap<Scalar>(n, l, std::move(phi), FeatureProvenance::Eig);
}

/// Phi = U_d D_d for the top-d singular triplets of Y (x) X, assembled from the
/// factor SVDs. Requests beyond the available singular pairs yield zero columns.
template <typename DerivedX, typename DerivedY>
FeatureMap<typename DerivedX::Scalar> features_from_svd(const Eigen::MatrixBase<DerivedX>& x,
                                                        const Eigen::MatrixBase<DerivedY>& y, Index d) {
  using Scalar = typename DerivedX::Scalar;
  const Index n = x.rows();
  const Index l = y.rows();
  detail::require(n >= 1 && l >= 1 && x.cols() >= 1 && y.cols() >= 1,
                  "features_from_svd: feature matrices must be nonempty");
  detail::require(d >= 1 && d <= std::min(n * l, x.cols() * y.cols()),
                  "features_from_svd: d must lie in [1, min(N L, t_x t_y)]");
  Eigen::BDCSVD<Matrix<Scalar>> sx(x.derived(), Eigen::ComputeThinU);
  Eigen::BDCSVD<Matrix<Scalar>> sy(y.derived(), Eigen::ComputeThinU);
  const Vector<Scalar> dx = detail::clamp_spectrum<Scalar>(sx.singularValues(), std::max(n, x.cols()));
  const Vector<Scalar> dy = detail::clamp_spectrum<Scalar>(sy.singularValues(), std::max(l, y.cols()));
  const Matrix<Scalar> ux = sx.matrixU();
  const Matrix<Scalar> uy = sy.matrixU();

  const auto ranked = detail::top_products<Scalar>(dy, dx, d);
  RowMajorMatrix<Scalar> phi = RowMajorMatrix<Scalar>::Zero(n * l, d);
  for (std::size_t c = 0; c < ranked.size(); ++c) {
    const auto& p = ranked[c];
    const Scalar w = dy(p.outer) * dx(p.inner);
    if (w == Scalar(0)) continue;
    for (Index j = 0; j < l; ++j) {
      const Scalar wy = w * uy(j, p.outer);
      for (Index i = 0; i < n; ++i) phi(j * n + i, static_cast<Index>(c)) = wy * ux(i, p.inner);
    }
  }
  return FeatureMap<Scalar>(n, l, std::move(phi), FeatureProvenance::Svd);
}

}  // namespace kmcex
