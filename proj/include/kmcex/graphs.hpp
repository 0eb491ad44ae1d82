#pragma once

// Graphs and graph Laplacians used to seed the spectral kernels.

#include "kmcex/common.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace kmcex {

/// Undirected weighted graph held as a dense adjacency matrix.
/// The adjacency is exactly symmetric, has a zero diagonal and nonnegative weights.
template <typename Scalar = double>
class Graph {
 public:
  Graph() = default;

  explicit Graph(Matrix<Scalar> adjacency) : adjacency_(std::move(adjacency)) {
    detail::require(adjacency_.rows() == adjacency_.cols() && adjacency_.rows() >= 1,
                    "adjacency must be a nonempty square matrix");
    detail::require(adjacency_.allFinite(), "adjacency has non-finite entries");
    detail::require(detail::is_exactly_symmetric(adjacency_), "adjacency must be symmetric");
    detail::require((adjacency_.array() >= Scalar(0)).all(), "adjacency has negative weights");
    detail::require((adjacency_.diagonal().array() == Scalar(0)).all(),
                    "adjacency must have a zero diagonal");
  }

  [[nodiscard]] Index num_vertices() const { return adjacency_.rows(); }
  [[nodiscard]] const Matrix<Scalar>& adjacency() const { return adjacency_; }

  [[nodiscard]] Index num_edges() const {
    Index count = 0;
    for (Index j = 0; j < adjacency_.cols(); ++j)
      for (Index i = j + 1; i < adjacency_.rows(); ++i)
        if (adjacency_(i, j) > Scalar(0)) ++count;
    return count;
  }

 private:
  Matrix<Scalar> adjacency_;
};

/// Combinatorial Laplacian L = diag(A 1) - A.
template <typename Scalar = double>
struct Laplacian {
  Matrix<Scalar> matrix;

  [[nodiscard]] Index size() const { return matrix.rows(); }
};

template <typename Scalar>
Laplacian<Scalar> build_laplacian(const Graph<Scalar>& graph) {
  const auto& a = graph.adjacency();
  Matrix<Scalar> l = -a;
  l.diagonal() = a.rowwise().sum();
  return {std::move(l)};
}

/// Validating overload for raw adjacency matrices.
template <typename Derived>
Laplacian<typename Derived::Scalar> build_laplacian(const Eigen::MatrixBase<Derived>& adjacency) {
  return build_laplacian(Graph<typename Derived::Scalar>(adjacency.eval()));
}

/// G(n, p) random graph with unit edge weights. Pairs are visited in column-major
/// upper-triangular order so a seed fully determines the graph.
template <typename Scalar = double>
Graph<Scalar> erdos_renyi(Index n, double p, std::uint64_t seed) {
  detail::require(n >= 1, "erdos_renyi: n must be positive");
  detail::require(p >= 0.0 && p <= 1.0, "erdos_renyi: p must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(p);
  Matrix<Scalar> a = Matrix<Scalar>::Zero(n, n);
  for (Index j = 1; j < n; ++j)
    for (Index i = 0; i < j; ++i)
      if (edge(rng)) a(i, j) = a(j, i) = Scalar(1);
  return Graph<Scalar>(std::move(a));
}

/// Symmetrized k-nearest-neighbour graph: A = sign(P + P^T) where row i of P marks
/// the k closest other vertices of i. Distance ties resolve to the lower index.
template <typename Derived>
Graph<typename Derived::Scalar> knn_symmetric(const Eigen::MatrixBase<Derived>& distances, Index k) {
  using Scalar = typename Derived::Scalar;
  const Index n = distances.rows();
  detail::require(n >= 1 && distances.cols() == n, "knn_symmetric: distances must be square");
  detail::require(detail::is_exactly_symmetric(distances), "knn_symmetric: distances must be symmetric");
  detail::require((distances.array() >= Scalar(0)).all(), "knn_symmetric: distances must be nonnegative");
  detail::require((distances.diagonal().array() == Scalar(0)).all(),
                  "knn_symmetric: distances must have a zero diagonal");
  detail::require(k >= 0 && k < n, "knn_symmetric: k must satisfy 0 <= k < n");

  Matrix<Scalar> a = Matrix<Scalar>::Zero(n, n);
  std::vector<Index> order;
  for (Index i = 0; i < n; ++i) {
    order.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    order.erase(order.begin() + i);
    std::stable_sort(order.begin(), order.end(),
                     [&](Index u, Index v) { return distances(i, u) < distances(i, v); });
    for (Index r = 0; r < k; ++r) {
      const Index nb = order[static_cast<std::size_t>(r)];
      a(i, nb) = a(nb, i) = Scalar(1);
    }
  }
  return Graph<Scalar>(std::move(a));
}

/// Banded graph on a line: vertex t is joined to every vertex within `width` steps.
template <typename Scalar = double>
Graph<Scalar> band_graph(Index n, Index width) {
  detail::require(n >= 1, "band_graph: n must be positive");
  detail::require(width >= 0, "band_graph: width must be nonnegative");
  Matrix<Scalar> a = Matrix<Scalar>::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n && j - i <= width; ++j) a(i, j) = a(j, i) = Scalar(1);
  return Graph<Scalar>(std::move(a));
}

/// All-pairs hop-count distances (edges are the pairs with positive weight).
/// Throws InvalidInput naming an unreachable pair when the graph is disconnected.
template <typename Scalar>
Matrix<Scalar> geodesic_distances(const Graph<Scalar>& graph) {
  const Index n = graph.num_vertices();
  const auto& a = graph.adjacency();
  std::vector<std::vector<Index>> nbrs(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i)
      if (a(i, j) > Scalar(0)) nbrs[static_cast<std::size_t>(j)].push_back(i);

  Matrix<Scalar> d(n, n);
  std::vector<Index> hops(static_cast<std::size_t>(n));
  std::deque<Index> queue;
  for (Index s = 0; s < n; ++s) {
    std::fill(hops.begin(), hops.end(), Index{-1});
    hops[static_cast<std::size_t>(s)] = 0;
    queue.assign(1, s);
    while (!queue.empty()) {
      const Index u = queue.front();
      queue.pop_front();
      for (Index v : nbrs[static_cast<std::size_t>(u)]) {
        if (hops[static_cast<std::size_t>(v)] < 0) {
          hops[static_cast<std::size_t>(v)] = hops[static_cast<std::size_t>(u)] + 1;
          queue.push_back(v);
        }
      }
    }
    for (Index t = 0; t < n; ++t) {
      if (hops[static_cast<std::size_t>(t)] < 0)
        throw InvalidInput("geodesic_distances: graph is disconnected; vertex " + std::to_string(t) +
                           " is unreachable from vertex " + std::to_string(s));
      d(s, t) = static_cast<Scalar>(hops[static_cast<std::size_t>(t)]);
    }
  }
  return d;
}

/// Heat-kernel adjacency (A)_ij = exp(-n^2 d_ij / sum d), diagonal forced to zero.
template <typename Derived>
Graph<typename Derived::Scalar> heat_adjacency(const Eigen::MatrixBase<Derived>& distances, Index n) {
  using Scalar = typename Derived::Scalar;
  detail::require(distances.rows() == distances.cols() && distances.rows() >= 1,
                  "heat_adjacency: distances must be square");
  detail::require(distances.allFinite(), "heat_adjacency: distances must be finite");
  detail::require(detail::is_exactly_symmetric(distances), "heat_adjacency: distances must be symmetric");
  detail::require((distances.array() >= Scalar(0)).all(), "heat_adjacency: distances must be nonnegative");
  const Scalar total = distances.sum();
  detail::require(total > Scalar(0), "heat_adjacency: distances sum to zero");
  const Scalar scale = static_cast<Scalar>(n) * static_cast<Scalar>(n) / total;
  // Mirror one triangle: packet and scalar exp may differ in the last bit.
  Matrix<Scalar> a = Matrix<Scalar>::Zero(distances.rows(), distances.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = j + 1; i < a.rows(); ++i) a(i, j) = a(j, i) = std::exp(-scale * distances(i, j));
  return Graph<Scalar>(std::move(a));
}

}  // namespace kmcex
