#include "kmcex/sampling.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace kmcex;

TEST(VecIndex, ColumnMajorOrder) {
  EXPECT_EQ(vec_index(0, 0, 3), 0);
  EXPECT_EQ(vec_index(2, 0, 3), 2);
  EXPECT_EQ(vec_index(0, 1, 3), 3);
  EXPECT_EQ(vec_index(1, 4, 3), 13);
  EXPECT_THROW(vec_index(3, 0, 3), IndexError);
  EXPECT_THROW(vec_index(0, -1, 3), IndexError);
}

TEST(VecIndex, AgreesWithOracleStacking) {
  std::mt19937_64 rng(1);
  const oracle::Mat m = oracle::random_matrix(4, 5, rng);
  const oracle::Vec v = oracle::vec(m);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 4; ++i) EXPECT_EQ(v(vec_index(i, j, 4)), m(i, j));
}

TEST(SamplingSet, RejectsDuplicatesAndOutOfRange) {
  EXPECT_THROW(SamplingSet(2, 2, {{0, 0}, {0, 0}}), InvalidInput);
  EXPECT_THROW(SamplingSet(2, 2, {{2, 0}}), IndexError);
  EXPECT_THROW(SamplingSet(2, 2, {{0, -1}}), IndexError);
  EXPECT_THROW(SamplingSet(0, 2, {}), InvalidInput);
}

TEST(SamplingSet, SelectorPicksObservedEntries) {
  const SamplingSet s(3, 2, {{2, 1}, {0, 0}});
  const auto sel = s.selector<double>();
  ASSERT_EQ(sel.rows(), 2);
  ASSERT_EQ(sel.cols(), 6);
  EXPECT_EQ(sel(0, 5), 1.0);
  EXPECT_EQ(sel(1, 0), 1.0);
  EXPECT_EQ(sel.sum(), 2.0);
  EXPECT_EQ((sel * sel.transpose()), Matrix<double>::Identity(2, 2));
  EXPECT_DOUBLE_EQ(s.percent_observed(), 100.0 / 3.0);
}

TEST(SamplingSet, SubsetKeepsRequestedOrder) {
  const SamplingSet s(3, 3, {{0, 0}, {1, 1}, {2, 2}});
  const auto sub = s.subset({2, 0});
  ASSERT_EQ(sub.size(), 2);
  EXPECT_EQ(sub[0], (Entry{2, 2}));
  EXPECT_EQ(sub[1], (Entry{0, 0}));
}

TEST(FullSampling, IsVectorizationOrder) {
  const auto s = full_sampling(3, 4);
  ASSERT_EQ(s.size(), 12);
  for (Index k = 0; k < 12; ++k) EXPECT_EQ(s.vec_indices()[k], k);
  EXPECT_EQ(s.selector<double>(), Matrix<double>::Identity(12, 12));
}

TEST(UniformSample, DistinctDeterministicAndBounded) {
  for (Index count : {0, 1, 7, 30}) {
    const auto a = uniform_sample(5, 6, count, 11);
    const auto b = uniform_sample(5, 6, count, 11);
    EXPECT_EQ(a.entries(), b.entries());
    std::set<Index> distinct(a.vec_indices().begin(), a.vec_indices().end());
    EXPECT_EQ(static_cast<Index>(distinct.size()), count);
  }
  EXPECT_THROW(uniform_sample(5, 6, 31, 1), InvalidInput);
  EXPECT_THROW(uniform_sample(5, 6, -1, 1), InvalidInput);
}

TEST(UniformSample, EntriesAreRoughlyUniform) {
  // Each of 20 cells is chosen with probability 5/20 per draw set.
  std::vector<int> hits(20, 0);
  const int trials = 4000;
  for (int t = 0; t < trials; ++t) {
    const auto s = uniform_sample(4, 5, 5, static_cast<std::uint64_t>(t));
    for (Index v : s.vec_indices()) ++hits[v];
  }
  const double mean = trials * 0.25;
  const double sd = std::sqrt(trials * 0.25 * 0.75);
  for (int h : hits) EXPECT_LE(std::abs(h - mean), 4.5 * sd);
}

TEST(Noise, NoneIsExactlyZero) {
  std::mt19937_64 rng(2);
  const oracle::Mat f = oracle::random_matrix(3, 3, rng);
  EXPECT_EQ(noise_matrix(f, NoiseSpec::none()), Matrix<double>::Zero(3, 3));
}

TEST(Noise, TargetSnrIsExactOverTheFullGrid) {
  std::mt19937_64 rng(3);
  const oracle::Mat f = oracle::random_matrix(20, 15, rng);
  for (double snr : {0.5, 1.0, 10.0}) {
    const auto e = noise_matrix(f, NoiseSpec::target_snr(snr, 4));
    EXPECT_NEAR(f.squaredNorm() / e.squaredNorm(), snr, 1e-10 * snr);
  }
  EXPECT_THROW(NoiseSpec::target_snr(0.0, 1), InvalidInput);
}

TEST(Noise, VarianceMatchesSampleVariance) {
  const oracle::Mat f = oracle::Mat::Zero(200, 200);
  const auto e = noise_matrix(f, NoiseSpec::variance(0.25, 9));
  const double var = e.squaredNorm() / static_cast<double>(e.size());
  // standard error of the sample variance is about 0.25 * sqrt(2 / 40000)
  EXPECT_NEAR(var, 0.25, 6 * 0.25 * std::sqrt(2.0 / 40000));
  EXPECT_NEAR(e.mean(), 0.0, 6 * 0.5 / 200.0);
  EXPECT_THROW(NoiseSpec::variance(-1.0, 1), InvalidInput);
}

TEST(Observe, NoiselessValuesAreTheSampledEntries) {
  std::mt19937_64 rng(4);
  const oracle::Mat f = oracle::random_matrix(4, 3, rng);
  const auto s = uniform_sample(4, 3, 6, 5);
  const auto obs = observe(f, s);
  const oracle::Vec expected = s.selector<double>() * oracle::vec(f);
  EXPECT_EQ(Vector<double>(obs.values), expected);
  const auto masked = masked_matrix(obs);
  for (Index k = 0; k < s.size(); ++k) EXPECT_EQ(masked(s[k].row, s[k].col), f(s[k].row, s[k].col));
  EXPECT_EQ((masked.array() != 0).count(), 6);
}

TEST(Observe, NoisyValuesAddTheFullGridNoise) {
  std::mt19937_64 rng(5);
  const oracle::Mat f = oracle::random_matrix(5, 5, rng);
  const auto s = uniform_sample(5, 5, 10, 6);
  const auto noise = NoiseSpec::target_snr(2.0, 7);
  const auto obs = observe(f, s, noise);
  const auto e = noise_matrix(f, noise);
  for (Index k = 0; k < s.size(); ++k) EXPECT_DOUBLE_EQ(obs.values(k), f(s[k].row, s[k].col) + e(s[k].row, s[k].col));
  EXPECT_THROW(observe(oracle::Mat::Zero(4, 5), s), InvalidInput);
}

TEST(ObservationSet, SubsetAndValidation) {
  const SamplingSet s(2, 2, {{0, 0}, {1, 1}, {0, 1}});
  const ObservationSet<double> obs(s, Vector<double>(Eigen::Vector3d(1, 2, 3)));
  const auto sub = obs.subset({2, 1});
  EXPECT_EQ(sub.values(0), 3);
  EXPECT_EQ(sub.values(1), 2);
  EXPECT_EQ(sub.sampling[0], (Entry{0, 1}));
  EXPECT_THROW(ObservationSet<double>(s, Vector<double>::Zero(2)), InvalidInput);
}

TEST(Sampling, FloatInstantiation) {
  const Matrix<float> f = Matrix<float>::Ones(3, 3);
  const auto obs = observe(f, full_sampling(3, 3), NoiseSpec::target_snr(1.0f, 1));
  EXPECT_EQ(obs.values.size(), 9);
  const Matrix<float> e = masked_matrix(obs) - f;
  EXPECT_NEAR(f.squaredNorm() / e.squaredNorm(), 1.0f, 1e-4f);
}
