#pragma once

// Undirected graphs in CSR form, the self-loop-normalised adjacency, and a
// power-iteration estimate of its spectral radius.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmc/errors.hpp"

namespace lmc {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

/// Symmetric CSR adjacency without self-loops. Neighbor lists are sorted and
/// deduplicated.
struct Graph {
  std::size_t n = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<NodeId> neighbors;

  std::size_t degree(NodeId v) const { return offsets[v + 1] - offsets[v]; }
  std::span<const NodeId> neighbors_of(NodeId v) const {
    return {neighbors.data() + offsets[v], degree(v)};
  }
  std::size_t num_edges() const { return neighbors.size() / 2; }
  bool has_edge(NodeId u, NodeId v) const {
    auto nb = neighbors_of(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }
};

/// Builds a symmetric, deduplicated CSR graph. Self-loops in the input are
/// dropped; they are reintroduced only by normalisation.
inline Graph build_graph(std::span<const Edge> edges, std::size_t n) {
  std::vector<std::vector<NodeId>> adj(n);
  for (const auto& [u, v] : edges) {
    if (u >= n || v >= n) {
      throw ConfigError("build_graph: edge (" + std::to_string(u) + ", " + std::to_string(v) +
                        ") out of range for n=" + std::to_string(n));
    }
    if (u == v) continue;
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  Graph g;
  g.n = n;
  g.offsets.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& a = adj[i];
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    g.offsets[i + 1] = g.offsets[i] + a.size();
  }
  g.neighbors.reserve(g.offsets[n]);
  for (auto& a : adj) g.neighbors.insert(g.neighbors.end(), a.begin(), a.end());
  return g;
}

inline Graph build_graph(const std::vector<Edge>& edges, std::size_t n) {
  return build_graph(std::span<const Edge>(edges), n);
}

/// A_hat = (D+I)^{-1/2} (A+I) (D+I)^{-1/2}, stored over the Graph topology
/// with the diagonal kept separately. Holds its own copy of the topology.
struct NormalizedAdjacency {
  std::shared_ptr<const Graph> graph;
  std::vector<double> values;  // aligned with graph->neighbors
  std::vector<double> diag;    // 1 / (deg + 1)

  std::size_t n() const { return graph->n; }
  std::span<const double> values_of(NodeId v) const {
    return {values.data() + graph->offsets[v], graph->degree(v)};
  }
  double weight(NodeId i, NodeId j) const {
    if (i == j) return diag[i];
    auto nb = graph->neighbors_of(i);
    auto it = std::lower_bound(nb.begin(), nb.end(), j);
    if (it == nb.end() || *it != j) return 0.0;
    return values[graph->offsets[i] + static_cast<std::size_t>(it - nb.begin())];
  }
};

inline NormalizedAdjacency normalized_adjacency(const Graph& g) {
  NormalizedAdjacency a;
  a.graph = std::make_shared<const Graph>(g);
  a.values.resize(g.neighbors.size());
  a.diag.resize(g.n);
  for (NodeId i = 0; i < g.n; ++i) a.diag[i] = 1.0 / static_cast<double>(g.degree(i) + 1);
  // One evaluation per unordered pair keeps the matrix exactly symmetric.
  for (NodeId i = 0; i < g.n; ++i) {
    auto nb = g.neighbors_of(i);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const NodeId j = nb[k];
      if (j < i) continue;
      const double w = 1.0 / std::sqrt(static_cast<double>((g.degree(i) + 1) * (g.degree(j) + 1)));
      a.values[g.offsets[i] + k] = w;
      auto nbj = g.neighbors_of(j);
      auto it = std::lower_bound(nbj.begin(), nbj.end(), i);
      a.values[g.offsets[j] + static_cast<std::size_t>(it - nbj.begin())] = w;
    }
  }
  return a;
}

/// y = A_hat x for a single column vector.
inline std::vector<double> adjacency_apply(const NormalizedAdjacency& a, std::span<const double> x) {
  const Graph& g = *a.graph;
  std::vector<double> y(g.n);
  for (NodeId i = 0; i < g.n; ++i) {
    double s = a.diag[i] * x[i];
    auto nb = g.neighbors_of(i);
    auto w = a.values_of(i);
    for (std::size_t k = 0; k < nb.size(); ++k) s += w[k] * x[nb[k]];
    y[i] = s;
  }
  return y;
}

struct SpectralEstimate {
  double value = 0.0;
  double residual = 0.0;  // ||A x - value x|| for the unit iterate x
  int iterations = 0;
};

/// Power iteration with a Rayleigh-quotient estimate. Starts from the all-ones
/// vector, which is never orthogonal to the Perron vector of A_hat.
inline SpectralEstimate spectral_radius(const NormalizedAdjacency& a, int iters, double tol) {
  const std::size_t n = a.n();
  SpectralEstimate est;
  if (n == 0) return est;
  std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
  for (int it = 1; it <= std::max(1, iters); ++it) {
    auto y = adjacency_apply(a, x);
    double rq = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      rq += x[i] * y[i];
      norm += y[i] * y[i];
    }
    norm = std::sqrt(norm);
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res += (y[i] - rq * x[i]) * (y[i] - rq * x[i]);
    est = {rq, std::sqrt(res), it};
    if (norm == 0.0) break;
    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / norm;
    if (est.residual <= tol) break;
  }
  return est;
}

/// Induced subgraph on a sorted node list; local id = position in `nodes`.
inline Graph induced_subgraph(const Graph& g, std::span<const NodeId> nodes) {
  std::vector<Edge> edges;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    for (NodeId v : g.neighbors_of(nodes[a])) {
      auto it = std::lower_bound(nodes.begin(), nodes.end(), v);
      if (it != nodes.end() && *it == v) {
        const auto b = static_cast<NodeId>(it - nodes.begin());
        if (a < b) edges.emplace_back(static_cast<NodeId>(a), b);
      }
    }
  }
  return build_graph(edges, nodes.size());
}

}  // namespace lmc
