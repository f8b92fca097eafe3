#include <gtest/gtest.h>

#include <vector>

#include "lmc/aggregate.hpp"
#include "oracles.hpp"

using lmc::DenseMatrix;
using lmc::Edge;
using lmc::NodeId;

TEST(Aggregate, SelfLoopOnly) {
  const auto adj = lmc::normalized_adjacency(lmc::build_graph(std::vector<Edge>{}, 1));
  const auto out = lmc::aggregate(lmc::full_view(adj), DenseMatrix{{2.0, -3.0}});
  EXPECT_EQ(out, (DenseMatrix{{2.0, -3.0}}));
}

TEST(Aggregate, SingleEdgeAverages) {
  const auto adj = lmc::normalized_adjacency(lmc::build_graph(std::vector<Edge>{{0, 1}}, 2));
  const auto out = lmc::aggregate(lmc::full_view(adj), DenseMatrix{{1, 0}, {0, 1}});
  EXPECT_EQ(out, (DenseMatrix{{0.5, 0.5}, {0.5, 0.5}}));
}

TEST(Aggregate, PathWithFallbackMatchesDense) {
  const auto edges = oracle::path_edges(3);
  const auto g = lmc::build_graph(edges, 3);
  const auto adj = lmc::normalized_adjacency(g);
  const DenseMatrix H = oracle::random_matrix(3, 4, 1);
  const DenseMatrix ref = oracle::naive_matmul(oracle::dense_normalized_adjacency(edges, 3), H);
  // target {0}, sources {0,1}; local ids are global ids here
  const std::vector<NodeId> targets{0};
  const auto view = lmc::make_view(
      adj, targets, [](NodeId v) { return static_cast<std::int64_t>(v); }, [](NodeId v) { return v <= 1; });
  const DenseMatrix fallback = H;
  const auto out = lmc::aggregate(view, H, &fallback);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out(0, j), ref(0, j), 1e-14);
}

TEST(Aggregate, FallbackIsUsedForPrunedRows) {
  const auto edges = oracle::path_edges(3);
  const auto adj = lmc::normalized_adjacency(lmc::build_graph(edges, 3));
  const std::vector<NodeId> targets{1};
  const auto view = lmc::make_view(
      adj, targets, [](NodeId v) { return static_cast<std::int64_t>(v); }, [](NodeId v) { return v != 2; });
  const DenseMatrix src{{1.0}, {2.0}, {100.0}};
  const DenseMatrix fb{{0.0}, {0.0}, {4.0}};
  const double expect = adj.weight(1, 0) * 1.0 + adj.weight(1, 1) * 2.0 + adj.weight(1, 2) * 4.0;
  EXPECT_NEAR(lmc::aggregate(view, src, &fb)(0, 0), expect, 1e-15);
  const double dropped = adj.weight(1, 0) * 1.0 + adj.weight(1, 1) * 2.0;
  EXPECT_NEAR(lmc::aggregate(view, src, nullptr, lmc::Pruned::Drop)(0, 0), dropped, 1e-15);
  EXPECT_THROW(lmc::aggregate(view, src), lmc::ConfigError);
  EXPECT_TRUE(view.has_pruned());
}

TEST(Aggregate, FullViewMatchesDenseOnRandomGraphs) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto edges = oracle::random_edges(20, 0.15, seed);
    const auto adj = lmc::normalized_adjacency(lmc::build_graph(edges, 20));
    const DenseMatrix H = oracle::random_matrix(20, 5, seed + 100);
    const auto out = lmc::aggregate(lmc::full_view(adj), H);
    const auto ref = oracle::naive_matmul(oracle::dense_normalized_adjacency(edges, 20), H);
    EXPECT_LE(lmc::max_abs_diff(out, ref), 1e-13);
  }
}

TEST(Aggregate, Deterministic) {
  const auto edges = oracle::random_edges(30, 0.2, 3);
  const auto adj = lmc::normalized_adjacency(lmc::build_graph(edges, 30));
  const DenseMatrix H = oracle::random_matrix(30, 3, 4);
  const auto v = lmc::full_view(adj);
  EXPECT_EQ(lmc::aggregate(v, H), lmc::aggregate(v, H));
}

TEST(Aggregate, CounterCountsReads) {
  const auto g = lmc::build_graph(oracle::path_edges(4), 4);
  const auto adj = lmc::normalized_adjacency(g);
  lmc::OpCounter c;
  lmc::aggregate(lmc::full_view(adj), DenseMatrix(4, 2), nullptr, lmc::Pruned::Reject, &c);
  EXPECT_EQ(c.source_rows, 4u + 2u * g.num_edges());
}

TEST(Aggregate, ShapeErrors) {
  const auto adj = lmc::normalized_adjacency(lmc::build_graph(oracle::path_edges(3), 3));
  const auto v = lmc::full_view(adj);
  EXPECT_THROW(lmc::aggregate(v, DenseMatrix(2, 2)), lmc::ShapeError);
  const DenseMatrix fb(3, 3);
  EXPECT_THROW(lmc::aggregate(v, DenseMatrix(3, 2), &fb), lmc::ShapeError);
}

TEST(BatchViews, SplitsCoreNeighbourhood) {
  // path 0-1-2-3-4, core {1,2}
  const auto g = lmc::build_graph(oracle::path_edges(5), 5);
  const auto adj = lmc::normalized_adjacency(g);
  const auto p = lmc::partition_from_assignment({0, 1, 1, 2, 2}, 3);
  const auto b = lmc::make_minibatch(g, p, {1}, lmc::LabeledSet::all(5));
  ASSERT_EQ(b.halo1, (std::vector<NodeId>{0, 3}));
  ASSERT_EQ(b.halo2, (std::vector<NodeId>{4}));
  const auto v = lmc::make_batch_views(adj, b);
  const auto dense = oracle::dense_from_graph(g);
  // local rows: core 1,2 | halo 0,3 | halo2 4
  DenseMatrix H(5, 1);
  const std::vector<double> global_vals{1.0, 2.0, 3.0, 5.0, 7.0};
  for (std::uint32_t lid = 0; lid < 5; ++lid) H(lid, 0) = global_vals[b.global_id(lid)];
  DenseMatrix Hg(5, 1);
  for (NodeId u = 0; u < 5; ++u) Hg(u, 0) = global_vals[u];
  const auto ref = oracle::naive_matmul(dense, Hg);

  const auto full_core = lmc::aggregate(v.core, H);
  const auto local = lmc::aggregate(v.core_local_only, H, nullptr, lmc::Pruned::Drop);
  const auto halo_part = lmc::aggregate(v.core_halo_only, H, nullptr, lmc::Pruned::Drop);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(full_core(i, 0), ref(b.core[i], 0), 1e-15);
    EXPECT_NEAR(local(i, 0) + halo_part(i, 0), full_core(i, 0), 1e-15);
  }
  const auto halo_full = lmc::aggregate(v.halo_full, H);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(halo_full(i, 0), ref(b.halo1[i], 0), 1e-15);
  // node 3 loses its neighbour 4 in the pruned halo view
  const auto halo = lmc::aggregate(v.halo, H, nullptr, lmc::Pruned::Drop);
  EXPECT_NEAR(halo(1, 0), ref(3, 0) - dense(3, 4) * 7.0, 1e-15);
  EXPECT_NEAR(halo(0, 0), ref(0, 0), 1e-15);
}
