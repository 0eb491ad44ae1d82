#include "kmcex/graphs.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace kmcex;

TEST(Graph, RejectsBrokenAdjacency) {
  Matrix<double> a = Matrix<double>::Zero(3, 3);
  a(0, 1) = 1;
  EXPECT_THROW(Graph<double>{a}, InvalidInput);
  a(1, 0) = 1;
  EXPECT_NO_THROW(Graph<double>{a});
  a(0, 1) = a(1, 0) = -1;
  EXPECT_THROW(Graph<double>{a}, InvalidInput);
  a.setZero();
  a(2, 2) = 1;
  EXPECT_THROW(Graph<double>{a}, InvalidInput);
}

TEST(Laplacian, EmptyGraphIsZero) {
  const auto lap = build_laplacian(Graph<double>(Matrix<double>::Zero(3, 3)));
  EXPECT_EQ(lap.matrix, Matrix<double>::Zero(3, 3));
}

TEST(Laplacian, TwoNodeEdge) {
  Matrix<double> a(2, 2);
  a << 0, 1, 1, 0;
  Matrix<double> expected(2, 2);
  expected << 1, -1, -1, 1;
  EXPECT_EQ(build_laplacian(Graph<double>(a)).matrix, expected);
}

TEST(Laplacian, RowSumsVanishAndQuadraticFormIsNonnegative) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix<double> a = Matrix<double>::Zero(10, 10);
    for (int j = 0; j < 10; ++j)
      for (int i = j + 1; i < 10; ++i)
        if (u(rng) < 0.4) a(i, j) = a(j, i) = u(rng);
    const auto lap = build_laplacian(Graph<double>(a));
    for (int i = 0; i < 10; ++i) {
      double sum = 0;
      for (int j = 0; j < 10; ++j) sum += lap.matrix(i, j);
      EXPECT_NEAR(sum, 0.0, 1e-14);
    }
    const double top = oracle::sorted_eigenvalues(lap.matrix).maxCoeff();
    for (int k = 0; k < 5; ++k) {
      const oracle::Vec x = oracle::random_matrix(10, 1, rng);
      EXPECT_GE(x.dot(lap.matrix * x), -1e-10 * x.squaredNorm() * top);
    }
  }
}

TEST(Laplacian, RawAdjacencyOverloadValidates) {
  Matrix<double> a(2, 2);
  a << 0, 1, 2, 0;
  EXPECT_THROW(build_laplacian(a), InvalidInput);
}

TEST(ErdosRenyi, ExtremeProbabilities) {
  EXPECT_EQ(erdos_renyi<double>(12, 0.0, 1).num_edges(), 0);
  EXPECT_EQ(erdos_renyi<double>(12, 1.0, 1).num_edges(), 12 * 11 / 2);
  EXPECT_THROW(erdos_renyi<double>(5, 1.5, 1), InvalidInput);
  EXPECT_THROW(erdos_renyi<double>(5, -0.1, 1), InvalidInput);
}

TEST(ErdosRenyi, EdgeCountMatchesBinomial) {
  const double pairs = 250.0 * 249.0 / 2.0;
  const double mean = 0.03 * pairs;
  const double sd = std::sqrt(pairs * 0.03 * 0.97);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto g = erdos_renyi<double>(250, 0.03, seed);
    EXPECT_LE(std::abs(static_cast<double>(g.num_edges()) - mean), 3 * sd) << "seed " << seed;
  }
}

TEST(ErdosRenyi, DeterministicAndSymmetric) {
  const auto a = erdos_renyi<double>(40, 0.2, 99);
  const auto b = erdos_renyi<double>(40, 0.2, 99);
  EXPECT_EQ(a.adjacency(), b.adjacency());
  EXPECT_EQ(a.adjacency(), a.adjacency().transpose());
  EXPECT_NE(a.adjacency(), erdos_renyi<double>(40, 0.2, 100).adjacency());
}

namespace {

Matrix<double> line_distances(const std::vector<double>& x) {
  const Index n = static_cast<Index>(x.size());
  Matrix<double> d(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) d(i, j) = std::abs(x[i] - x[j]);
  return d;
}

}  // namespace

TEST(KnnSymmetric, CollinearPoints) {
  const auto g = knn_symmetric(line_distances({0, 1, 3}), 1);
  Matrix<double> expected(3, 3);
  expected << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  EXPECT_EQ(g.adjacency(), expected);
}

TEST(KnnSymmetric, ExtremeK) {
  const auto d = line_distances({0, 2, 3, 7, 11});
  EXPECT_EQ(knn_symmetric(d, 0).num_edges(), 0);
  EXPECT_EQ(knn_symmetric(d, 4).num_edges(), 10);
  EXPECT_THROW(knn_symmetric(d, 5), InvalidInput);
}

TEST(KnnSymmetric, EveryVertexKeepsItsNeighbors) {
  std::mt19937_64 rng(3);
  const oracle::Mat pts = oracle::random_matrix(15, 2, rng);
  Matrix<double> d(15, 15);
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 15; ++j) d(i, j) = (pts.row(i) - pts.row(j)).norm();
  const auto g = knn_symmetric(d, 3);
  for (int i = 0; i < 15; ++i) {
    int degree = 0;
    for (int j = 0; j < 15; ++j) degree += g.adjacency()(i, j) > 0;
    EXPECT_GE(degree, 3);
  }
}

TEST(Geodesic, PathAndDiagonal) {
  Matrix<double> a(3, 3);
  a << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  const auto d = geodesic_distances(Graph<double>(a));
  EXPECT_EQ(d(0, 2), 2);
  EXPECT_EQ(d.diagonal(), Vector<double>::Zero(3));
}

TEST(Geodesic, MatchesFloydWarshall) {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 10; ++seed) {
    const auto g = erdos_renyi<double>(8, 0.4, seed);
    const oracle::Mat expected = oracle::floyd_warshall(g.adjacency());
    if (!expected.allFinite()) {
      EXPECT_THROW(geodesic_distances(g), InvalidInput);
      continue;
    }
    EXPECT_EQ(geodesic_distances(g), expected);
    ++checked;
  }
}

TEST(Geodesic, DisconnectedGraphNamesAPair) {
  try {
    geodesic_distances(Graph<double>(Matrix<double>::Zero(3, 3)));
    FAIL() << "expected an error";
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("unreachable"), std::string::npos) << e.what();
  }
}

TEST(HeatAdjacency, EqualDistances) {
  const int n = 5;
  Matrix<double> d = Matrix<double>::Constant(n, n, 2.5);
  d.diagonal().setZero();
  const auto g = heat_adjacency(d, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      EXPECT_NEAR(g.adjacency()(i, j), i == j ? 0.0 : std::exp(-double(n) / (n - 1)), 1e-15);
}

TEST(HeatAdjacency, MatchesFormula) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.5, 3);
  Matrix<double> d = Matrix<double>::Zero(4, 4);
  for (int j = 0; j < 4; ++j)
    for (int i = j + 1; i < 4; ++i) d(i, j) = d(j, i) = u(rng);
  const auto g = heat_adjacency(d, 4);
  const double total = d.sum();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) EXPECT_NEAR(g.adjacency()(i, j), std::exp(-16.0 * d(i, j) / total), 1e-15);
}

TEST(HeatAdjacency, RejectsDegenerateInput) {
  EXPECT_THROW(heat_adjacency(Matrix<double>::Zero(3, 3), 3), InvalidInput);
  Matrix<double> d = Matrix<double>::Ones(3, 3);
  d(0, 1) = 2;
  EXPECT_THROW(heat_adjacency(d, 3), InvalidInput);
}

TEST(BandGraph, JoinsNearbyIndices) {
  const auto g = band_graph<double>(6, 2);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) EXPECT_EQ(g.adjacency()(i, j), (i != j && std::abs(i - j) <= 2) ? 1.0 : 0.0);
}

TEST(Graph, FloatInstantiation) {
  const auto g = erdos_renyi<float>(20, 0.3, 1);
  const auto lap = build_laplacian(g);
  EXPECT_LE((lap.matrix * Vector<float>::Ones(20)).cwiseAbs().maxCoeff(), 1e-5f);
}

TEST(HeatAdjacency, ExactlySymmetricAtAwkwardSizes) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.1, 5);
  for (int n : {5, 13, 37}) {
    Matrix<double> d = Matrix<double>::Zero(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = j + 1; i < n; ++i) d(i, j) = d(j, i) = u(rng);
    const auto g = heat_adjacency(d, n);
    EXPECT_EQ(g.adjacency(), g.adjacency().transpose());
  }
}
