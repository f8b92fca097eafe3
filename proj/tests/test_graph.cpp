#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lmc/graph.hpp"
#include "oracles.hpp"

using lmc::Edge;
using lmc::NodeId;

namespace {
std::vector<NodeId> nbrs(const lmc::Graph& g, NodeId v) {
  auto s = g.neighbors_of(v);
  return {s.begin(), s.end()};
}
}  // namespace

TEST(BuildGraph, SingleEdgeIsSymmetric) {
  const auto g = lmc::build_graph(std::vector<Edge>{{0, 1}}, 2);
  EXPECT_EQ(nbrs(g, 0), std::vector<NodeId>{1});
  EXPECT_EQ(nbrs(g, 1), std::vector<NodeId>{0});
  EXPECT_EQ(g.num_edges(), 1u);
}

TEST(BuildGraph, DuplicatesAndSelfLoopsDropped) {
  const auto a = lmc::build_graph(std::vector<Edge>{{0, 1}}, 2);
  const auto b = lmc::build_graph(std::vector<Edge>{{0, 1}, {1, 0}, {0, 0}}, 2);
  EXPECT_EQ(a.offsets, b.offsets);
  EXPECT_EQ(a.neighbors, b.neighbors);
}

TEST(BuildGraph, PathDegrees) {
  const auto g = lmc::build_graph(oracle::path_edges(3), 3);
  EXPECT_EQ(g.degree(0), 1u);
  EXPECT_EQ(g.degree(1), 2u);
  EXPECT_EQ(g.degree(2), 1u);
}

TEST(BuildGraph, OutOfRangeEdgeThrows) {
  EXPECT_THROW(lmc::build_graph(std::vector<Edge>{{0, 2}}, 2), lmc::ConfigError);
}

TEST(NormalizedAdjacency, SingleEdgeAllHalf) {
  const auto a = lmc::normalized_adjacency(lmc::build_graph(std::vector<Edge>{{0, 1}}, 2));
  for (NodeId i = 0; i < 2; ++i)
    for (NodeId j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(a.weight(i, j), 0.5);
}

TEST(NormalizedAdjacency, IsolatedNodeIsOne) {
  const auto a = lmc::normalized_adjacency(lmc::build_graph(std::vector<Edge>{}, 1));
  EXPECT_EQ(a.weight(0, 0), 1.0);
}

TEST(NormalizedAdjacency, PathEntry) {
  const auto a = lmc::normalized_adjacency(lmc::build_graph(oracle::path_edges(3), 3));
  EXPECT_NEAR(a.weight(0, 1), 0.408248, 1e-6);
  EXPECT_DOUBLE_EQ(a.weight(0, 1), 1.0 / std::sqrt(6.0));
  EXPECT_EQ(a.weight(0, 2), 0.0);
}

TEST(NormalizedAdjacency, MatchesDenseOracleAndIsSymmetric) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto edges = oracle::random_edges(20, 0.2, seed);
    const auto g = lmc::build_graph(edges, 20);
    const auto a = lmc::normalized_adjacency(g);
    const auto dense = oracle::dense_normalized_adjacency(edges, 20);
    for (NodeId i = 0; i < 20; ++i) {
      EXPECT_EQ(a.diag[i], 1.0 / static_cast<double>(g.degree(i) + 1));
      for (NodeId j = 0; j < 20; ++j) {
        EXPECT_NEAR(a.weight(i, j), dense(i, j), 1e-15);
        // same bit pattern both ways
        EXPECT_EQ(a.weight(i, j), a.weight(j, i));
        if (a.weight(i, j) != 0.0) {
          EXPECT_GT(a.weight(i, j), 0.0);
          EXPECT_LE(a.weight(i, j), 1.0);
        }
      }
    }
  }
}

TEST(SpectralRadius, IsolatedNode) {
  const auto a = lmc::normalized_adjacency(lmc::build_graph(std::vector<Edge>{}, 1));
  EXPECT_NEAR(lmc::spectral_radius(a, 100, 1e-12).value, 1.0, 1e-15);
}

TEST(SpectralRadius, SingleEdge) {
  const auto a = lmc::normalized_adjacency(lmc::build_graph(std::vector<Edge>{{0, 1}}, 2));
  const auto ev = oracle::symmetric_eigenvalues(lmc::DenseMatrix{{0.5, 0.5}, {0.5, 0.5}});
  const double oracle_rho = std::max(std::abs(ev[0]), std::abs(ev[1]));
  EXPECT_NEAR(oracle_rho, 1.0, 1e-14);
  EXPECT_NEAR(lmc::spectral_radius(a, 100, 1e-12).value, oracle_rho, 1e-12);
}

TEST(SpectralRadius, PathMatchesDenseEigensolve) {
  const auto edges = oracle::path_edges(3);
  const auto a = lmc::normalized_adjacency(lmc::build_graph(edges, 3));
  const auto ev = oracle::symmetric_eigenvalues(oracle::dense_normalized_adjacency(edges, 3));
  double rho = 0.0;
  for (double e : ev) rho = std::max(rho, std::abs(e));
  const auto est = lmc::spectral_radius(a, 500, 0.0);
  EXPECT_NEAR(est.value, rho, 1e-6);
  EXPECT_NEAR(est.value, 1.0, 1e-6);
}

TEST(SpectralRadius, RandomGraphsMatchDenseEigensolve) {
  for (std::uint64_t seed = 10; seed < 13; ++seed) {
    const auto edges = oracle::random_edges(12, 0.3, seed);
    const auto a = lmc::normalized_adjacency(lmc::build_graph(edges, 12));
    const auto ev = oracle::symmetric_eigenvalues(oracle::dense_normalized_adjacency(edges, 12));
    double rho = 0.0;
    for (double e : ev) rho = std::max(rho, std::abs(e));
    EXPECT_NEAR(lmc::spectral_radius(a, 2000, 1e-12).value, rho, 1e-6);
  }
}

TEST(InducedSubgraph, KeepsOnlyInternalEdges) {
  // 0-1-2-3 path plus chord 0-3
  auto edges = oracle::path_edges(4);
  edges.emplace_back(0, 3);
  const auto g = lmc::build_graph(edges, 4);
  const std::vector<NodeId> nodes{0, 1, 3};
  const auto s = lmc::induced_subgraph(g, nodes);
  EXPECT_EQ(s.n, 3u);
  EXPECT_EQ(s.num_edges(), 2u);
  EXPECT_TRUE(s.has_edge(0, 1));
  EXPECT_TRUE(s.has_edge(0, 2));
  EXPECT_FALSE(s.has_edge(1, 2));
}
