#include "kmcex/kernels.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace kmcex;

namespace {

KernelMatrix<double> random_kernel(int n, std::mt19937_64& rng) { return KernelMatrix<double>(oracle::random_spd(n, rng)); }

SamplingSet random_sampling(Index n, Index l, Index count, std::uint64_t seed) { return uniform_sample(n, l, count, seed); }

}  // namespace

TEST(KernelMatrix, ValidatesSymmetryAndPsd) {
  Matrix<double> a(2, 2);
  a << 1, 0.5, 0.4, 1;
  EXPECT_THROW(KernelMatrix<double>{a}, InvalidInput);
  a << 1, 2, 2, 1;
  EXPECT_THROW(KernelMatrix<double>{a}, InvalidInput);
  a << 2, 1, 1, 2;
  EXPECT_NO_THROW(KernelMatrix<double>{a});
}

TEST(SpectralKernel, EmptyGraphGivesIdentity) {
  const auto lap = build_laplacian(Graph<double>(Matrix<double>::Zero(4, 4)));
  for (double eta : {0.1, 1.0, 7.0})
    EXPECT_LE((spectral_kernel(lap, Diffusion{eta}).matrix() - Matrix<double>::Identity(4, 4)).norm(), 1e-14);
}

TEST(SpectralKernel, TwoNodeDiffusion) {
  Matrix<double> a(2, 2);
  a << 0, 1, 1, 0;
  const auto k = spectral_kernel(build_laplacian(Graph<double>(a)), Diffusion{1.0});
  Matrix<double> q(2, 2);
  q << 1, 1, 1, -1;
  q /= std::sqrt(2.0);
  const Matrix<double> expected = q * Vector<double>(Eigen::Vector2d(1.0, std::exp(-2.0))).asDiagonal() * q.transpose();
  EXPECT_LE((k.matrix() - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SpectralKernel, RegularizedLaplacianIsResolvent) {
  const auto lap = build_laplacian(erdos_renyi<double>(7, 0.5, 2));
  const double eta = 0.7;
  Matrix<double> expected = Matrix<double>::Identity(7, 7) + eta * lap.matrix;
  expected = expected.inverse().eval();
  EXPECT_LE((spectral_kernel(lap, RegularizedLaplacian{eta}).matrix() - expected).norm(), 1e-12);
}

TEST(SpectralKernel, BandlimitedSingleIndexIsRankOne) {
  const auto lap = build_laplacian(erdos_renyi<double>(6, 0.6, 4));
  const auto k = spectral_kernel(lap, Bandlimited{{0}});
  const auto ev = oracle::sorted_eigenvalues(k.matrix());
  EXPECT_NEAR(ev(5), 1.0, 1e-12);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(ev(i), 0.0, 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix<double>> eig(lap.matrix);
  const Vector<double> q1 = eig.eigenvectors().col(0);
  EXPECT_LE((k.matrix() - q1 * q1.transpose()).norm(), 1e-12);
}

TEST(SpectralKernel, RejectsBadWeights) {
  const auto lap = build_laplacian(erdos_renyi<double>(4, 0.5, 1));
  EXPECT_THROW(spectral_kernel(lap, Diffusion{0.0}), InvalidInput);
  EXPECT_THROW(spectral_kernel(lap, RegularizedLaplacian{-1.0}), InvalidInput);
  EXPECT_THROW(spectral_kernel(lap, Bandlimited{{}}), InvalidInput);
  EXPECT_THROW(spectral_kernel(lap, Bandlimited{{4}}), InvalidInput);
}

TEST(LinearKernel, SimpleCasesAndDotProductOracle) {
  EXPECT_EQ(linear_kernel(Matrix<double>::Identity(3, 3)).matrix(), Matrix<double>::Identity(3, 3));
  EXPECT_EQ(linear_kernel(Matrix<double>::Ones(4, 1)).matrix(), Matrix<double>::Ones(4, 4));
  std::mt19937_64 rng(1);
  const oracle::Mat x = oracle::random_matrix(5, 3, rng);
  const auto k = linear_kernel(x);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      double dot = 0;
      for (int c = 0; c < 3; ++c) dot += x(i, c) * x(j, c);
      EXPECT_NEAR(k(i, j), dot, 1e-13);
    }
  EXPECT_GE(oracle::sorted_eigenvalues(k.matrix()).minCoeff(), -1e-12);
}

TEST(GaussianKernel, DistanceFormula) {
  std::mt19937_64 rng(2);
  const oracle::Mat x = oracle::random_matrix(3, 4, rng);
  const auto k = gaussian_kernel(x, 1.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double d2 = 0;
      for (int c = 0; c < 4; ++c) d2 += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      EXPECT_NEAR(k(i, j), std::exp(-d2 / 2.0), 1e-15);
    }
}

TEST(GaussianKernel, LimitsAndErrors) {
  Matrix<double> same = Matrix<double>::Ones(3, 2);
  EXPECT_EQ(gaussian_kernel(same, 0.5).matrix(), Matrix<double>::Ones(3, 3));
  std::mt19937_64 rng(3);
  const oracle::Mat x = oracle::random_matrix(4, 2, rng);
  EXPECT_LE((gaussian_kernel(x, 1e12).matrix() - Matrix<double>::Ones(4, 4)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(gaussian_kernel(x, 0.0), InvalidInput);
}

TEST(PearsonKernel, AffineDependence) {
  Matrix<double> x(3, 5);
  x.row(0) << 1, 4, 2, 8, 5;
  x.row(1) = 2 * x.row(0).array() + 3;
  x.row(2) = -x.row(0);
  const auto k = pearson_kernel(x);
  EXPECT_NEAR(k(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(k(0, 2), -1.0, 1e-12);
  EXPECT_EQ(k(1, 1), 1.0);
}

TEST(PearsonKernel, MatchesTextbookCorrelation) {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution coin(0.5);
  Matrix<double> x(6, 10);
  for (int i = 0; i < 6; ++i) {
    do {
      for (int c = 0; c < 10; ++c) x(i, c) = coin(rng) ? 1 : 0;
    } while (x.row(i).sum() == 0 || x.row(i).sum() == 10);
  }
  const auto k = pearson_kernel(x);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      EXPECT_NEAR(k(i, j), oracle::pearson(x.row(i).transpose(), x.row(j).transpose()), 1e-12);
}

TEST(PearsonKernel, ConstantRowIsRejected) {
  Matrix<double> x(2, 3);
  x << 1, 2, 3, 4, 4, 4;
  EXPECT_THROW(pearson_kernel(x), InvalidInput);
}

TEST(KroneckerKernel, IdentityEntries) {
  const KroneckerKernel<double> kk(KernelMatrix<double>(Matrix<double>::Identity(2, 2)),
                                   KernelMatrix<double>(Matrix<double>::Identity(2, 2)));
  EXPECT_EQ(kk.entry(0, 0), 1.0);
  EXPECT_EQ(kk.entry(0, 1), 0.0);
  EXPECT_THROW(static_cast<void>(kk.entry(0, 4)), IndexError);
  EXPECT_THROW(static_cast<void>(kk.entry(-1, 0)), IndexError);
}

TEST(KroneckerKernel, ExhaustiveAgreementWithDenseProduct) {
  std::mt19937_64 rng(5);
  for (int n = 1; n <= 4; ++n)
    for (int l = 1; l <= 4; ++l) {
      const auto kx = random_kernel(n, rng);
      const auto ky = random_kernel(l, rng);
      const KroneckerKernel<double> kk(kx, ky);
      const oracle::Mat dense = oracle::kron(ky.matrix(), kx.matrix());
      for (int r = 0; r < n * l; ++r)
        for (int c = 0; c < n * l; ++c) {
          ASSERT_NEAR(kk.entry(r, c), dense(r, c), 1e-14);
          ASSERT_EQ(kk.entry(r, c), kk.entry(c, r));
        }
      EXPECT_LE((kk.dense() - dense).norm(), 1e-14);
    }
}

TEST(KroneckerKernel, SpectrumIsPairwiseProducts) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + trial % 5;
    const int l = 1 + (trial * 3) % 5;
    const auto kx = random_kernel(n, rng);
    const auto ky = random_kernel(l, rng);
    const oracle::Vec ex = oracle::sorted_eigenvalues(kx.matrix());
    const oracle::Vec ey = oracle::sorted_eigenvalues(ky.matrix());
    std::vector<double> products;
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < l; ++b) products.push_back(ex(a) * ey(b));
    std::sort(products.begin(), products.end());
    const oracle::Vec ez = oracle::sorted_eigenvalues(KroneckerKernel<double>(kx, ky).dense());
    for (int k = 0; k < n * l; ++k) EXPECT_NEAR(ez(k), products[k], 1e-8);
  }
}

TEST(KronSubmatrix, SingletonAndFullSampling) {
  std::mt19937_64 rng(7);
  const auto kx = random_kernel(3, rng);
  const auto ky = random_kernel(2, rng);
  const KroneckerKernel<double> kk(kx, ky);
  const SamplingSet one(3, 2, {{2, 1}});
  const auto g1 = kron_submatrix(kk, one);
  ASSERT_EQ(g1.rows(), 1);
  EXPECT_NEAR(g1(0, 0), kx(2, 2) * ky(1, 1), 1e-15);
  EXPECT_LE((kron_submatrix(kk, full_sampling(3, 2)) - oracle::kron(ky.matrix(), kx.matrix())).norm(), 1e-14);
}

TEST(KronSubmatrix, MatchesSelectorSandwichAndIsPsd) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto kx = random_kernel(4, rng);
    const auto ky = random_kernel(5, rng);
    const KroneckerKernel<double> kk(kx, ky);
    const auto s = random_sampling(4, 5, 1 + trial % 20, trial);
    const oracle::Mat sel = s.selector<double>();
    const oracle::Mat expected = sel * oracle::kron(ky.matrix(), kx.matrix()) * sel.transpose();
    const auto g = kron_submatrix(kk, s);
    EXPECT_LE((g - expected).norm(), 1e-13);
    EXPECT_GE(oracle::sorted_eigenvalues(g).minCoeff(), -1e-12);
  }
}

TEST(KronTimesSelector, BasisVectorAndConsistency) {
  const KroneckerKernel<double> id(KernelMatrix<double>(Matrix<double>::Identity(3, 3)),
                                   KernelMatrix<double>(Matrix<double>::Identity(2, 2)));
  const auto e = kron_times_selector(id, SamplingSet(3, 2, {{0, 0}}));
  Vector<double> basis = Vector<double>::Zero(6);
  basis(0) = 1;
  EXPECT_EQ(Vector<double>(e.col(0)), basis);

  std::mt19937_64 rng(9);
  const KroneckerKernel<double> kk(random_kernel(3, rng), random_kernel(4, rng));
  const auto s = random_sampling(3, 4, 7, 3);
  const auto ks = kron_times_selector(kk, s);
  const oracle::Mat dense = kk.dense() * s.selector<double>().transpose();
  EXPECT_LE((ks - dense).norm(), 1e-14);
  for (Index r = 0; r < 12; ++r)
    for (Index c = 0; c < s.size(); ++c) EXPECT_EQ(ks(r, c), kk.entry(r, s.vec_indices()[c]));
}

TEST(KronApply, MatchesDenseProduct) {
  std::mt19937_64 rng(10);
  const KroneckerKernel<double> kk(random_kernel(4, rng), random_kernel(3, rng));
  const oracle::Mat c = oracle::random_matrix(4, 3, rng);
  const oracle::Vec expected = oracle::kron(kk.ky().matrix(), kk.kx().matrix()) * oracle::vec(c);
  EXPECT_LE((oracle::vec(kron_apply(kk, c)) - expected).norm(), 1e-13);
}

TEST(FeaturesFromEig, DiagonalFactorsSelectLargestProducts) {
  Matrix<double> kx = Vector<double>(Eigen::Vector2d(1, 2)).asDiagonal();
  Matrix<double> ky = Vector<double>(Eigen::Vector2d(3, 4)).asDiagonal();
  const auto fm = features_from_eig(KernelMatrix<double>(kx), KernelMatrix<double>(ky), 2);
  // Products by vec index: (1,1)->3, (2,1)->6, (1,2)->4, (2,2)->8; keep 8 and 6.
  Matrix<double> expected = Vector<double>(Eigen::Vector4d(0, 6, 0, 8)).asDiagonal();
  EXPECT_LE((fm.gram() - expected).norm(), 1e-14);
  EXPECT_EQ(fm.provenance(), FeatureProvenance::Eig);
}

TEST(FeaturesFromEig, FullRankReconstructsKroneckerKernel) {
  std::mt19937_64 rng(11);
  const auto kx = random_kernel(4, rng);
  const auto ky = random_kernel(3, rng);
  const auto fm = features_from_eig(kx, ky, 12);
  const oracle::Mat dense = oracle::kron(ky.matrix(), kx.matrix());
  EXPECT_LE(oracle::rel_error(fm.gram(), dense), 1e-8);
  EXPECT_THROW(features_from_eig(kx, ky, 13), InvalidInput);
  EXPECT_THROW(features_from_eig(kx, ky, 0), InvalidInput);
}

TEST(FeaturesFromEig, RankDeficientFactorsGiveZeroColumns) {
  Matrix<double> kx = Matrix<double>::Ones(3, 3);  // rank one
  std::mt19937_64 rng(12);
  const auto ky = random_kernel(2, rng);
  const auto fm = features_from_eig(KernelMatrix<double>(kx), ky, 6);
  EXPECT_LE(oracle::rel_error(fm.gram(), oracle::kron(ky.matrix(), kx)), 1e-8);
  for (Index c = 2; c < 6; ++c) EXPECT_EQ(fm.phi().col(c).norm(), 0.0);
}

TEST(FeaturesFromSvd, OrthonormalFactorsGiveOrthonormalFeatures) {
  std::mt19937_64 rng(13);
  Eigen::HouseholderQR<oracle::Mat> qx(oracle::random_matrix(4, 2, rng));
  Eigen::HouseholderQR<oracle::Mat> qy(oracle::random_matrix(3, 2, rng));
  const oracle::Mat x = qx.householderQ() * oracle::Mat::Identity(4, 2);
  const oracle::Mat y = qy.householderQ() * oracle::Mat::Identity(3, 2);
  const auto fm = features_from_svd(x, y, 4);
  EXPECT_LE((Matrix<double>(fm.phi().transpose() * fm.phi()) - Matrix<double>::Identity(4, 4)).norm(), 1e-12);
}

TEST(FeaturesFromSvd, FullRankReconstructsLinearKroneckerKernel) {
  std::mt19937_64 rng(14);
  const oracle::Mat x = oracle::random_matrix(3, 2, rng);
  const oracle::Mat y = oracle::random_matrix(2, 3, rng);
  const auto fm = features_from_svd(x, y, 4);
  const oracle::Mat yx = oracle::kron(y, x);
  EXPECT_LE(oracle::rel_error(fm.gram(), yx * yx.transpose()), 1e-8);
  EXPECT_THROW(features_from_svd(x, y, 7), InvalidInput);
}

TEST(FeaturesFromSvd, RankOneFactorsExhaustAtOneColumn) {
  oracle::Mat x(3, 2);
  x << 1, 2, 2, 4, 3, 6;
  oracle::Mat y(2, 2);
  y << 1, 1, 2, 2;
  const auto fm1 = features_from_svd(x, y, 1);
  const oracle::Mat yx = oracle::kron(y, x);
  EXPECT_LE(oracle::rel_error(fm1.gram(), yx * yx.transpose()), 1e-12);
  const auto fm4 = features_from_svd(x, y, 4);
  for (Index c = 1; c < 4; ++c) EXPECT_EQ(fm4.phi().col(c).norm(), 0.0);
}

TEST(FeatureMap, ValidatesShape) {
  EXPECT_THROW(FeatureMap<double>(2, 2, RowMajorMatrix<double>::Zero(3, 1), FeatureProvenance::Explicit), InvalidInput);
  EXPECT_THROW(FeatureMap<double>(2, 2, RowMajorMatrix<double>::Zero(4, 5), FeatureProvenance::Explicit), InvalidInput);
  EXPECT_EQ(parse_provenance(to_string(FeatureProvenance::Svd)), FeatureProvenance::Svd);
  EXPECT_THROW(parse_provenance("fourier"), InvalidInput);
}

TEST(Kernels, FloatInstantiation) {
  const auto lap = build_laplacian(erdos_renyi<float>(6, 0.5, 3));
  const auto kx = spectral_kernel(lap, Diffusion{1.0});
  const auto ky = spectral_kernel(build_laplacian(erdos_renyi<float>(5, 0.5, 4)), Diffusion{1.0});
  const auto fm = features_from_eig(kx, ky, 30);
  const Matrix<float> dense = KroneckerKernel<float>(kx, ky).dense();
  EXPECT_LE((fm.gram() - dense).norm() / dense.norm(), 1e-5f);
}
