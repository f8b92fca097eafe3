#pragma once

// Shared training inputs (graph, features, labels) and gradient containers.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <cstdint>
#include <string>
#include <vector>

#include "lmc/aggregate.hpp"
#include "lmc/dense.hpp"
#include "lmc/graph.hpp"
#include "lmc/sampling.hpp"

namespace lmc {

/// Node labels for the whole graph. `classes` holds a class for every node
/// (used for evaluation); `train` marks the labelled training set V_L.
struct Labels {
  std::vector<int> classes;
  LabeledSet train;
  int num_classes = 0;
};

/// Everything a training step reads but never writes.
struct Problem {
  Graph graph;
  NormalizedAdjacency adj;
  LocalAdjView full;
  DenseMatrix features;
  Labels labels;

  std::size_t n() const { return graph.n; }
  std::size_t feature_dim() const { return features.cols(); }
};

inline Problem make_problem(Graph g, DenseMatrix features, Labels labels) {
  if (features.rows() != g.n) throw ShapeError("make_problem: feature rows != node count");
  if (labels.classes.size() != g.n || labels.train.mask.size() != g.n) {
    throw ShapeError("make_problem: label count != node count");
  }
  for (int c : labels.classes) {
    if (c < 0 || c >= labels.num_classes) throw ConfigError("make_problem: class id out of range");
  }
  Problem p;
  p.graph = std::move(g);
  p.adj = normalized_adjacency(p.graph);
  p.full = full_view(p.adj);
  p.features = std::move(features);
  p.labels = std::move(labels);
  return p;
}

/// Ordered gradient (or parameter) blocks, e.g. W^1..W^L, W_out.
struct GradSet {
  std::vector<DenseMatrix> blocks;

  double norm() const {
    double s = 0.0;
    for (const auto& b : blocks)
      for (double v : b.values()) s += v * v;
    return std::sqrt(s);
  }
  void add_scaled(double alpha, const GradSet& o) {
    if (o.blocks.size() != blocks.size()) throw ShapeError("GradSet: block count mismatch");
    for (std::size_t i = 0; i < blocks.size(); ++i) axpy(alpha, o.blocks[i], blocks[i]);
  }
  GradSet zeros_like() const {
    GradSet z;
    for (const auto& b : blocks) z.blocks.emplace_back(b.rows(), b.cols());
    return z;
  }
  friend bool operator==(const GradSet& a, const GradSet& b) { return a.blocks == b.blocks; }
};

/// ||a - b|| / ||b|| over the concatenation of all blocks.
inline double rel_err(const GradSet& a, const GradSet& b) {
  if (a.blocks.size() != b.blocks.size()) throw ShapeError("rel_err: block count mismatch");
  double diff = 0.0, base = 0.0;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    if (!a.blocks[i].same_shape(b.blocks[i])) throw ShapeError("rel_err: block shape mismatch");
    for (std::size_t k = 0; k < a.blocks[i].size(); ++k) {
      const double d = a.blocks[i].values()[k] - b.blocks[i].values()[k];
      diff += d * d;
      base += b.blocks[i].values()[k] * b.blocks[i].values()[k];
    }
  }
  if (base == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(diff / base);
}

inline double max_abs_diff(const GradSet& a, const GradSet& b) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) best = std::max(best, max_abs_diff(a.blocks[i], b.blocks[i]));
  return best;
}

/// Flat per-step record shared by every training method.
struct StepReport {
  std::size_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::optional<double> rel_grad_err;
  std::optional<double> d_h;
  std::optional<double> d_v;
  std::optional<int> fwd_iters;
  std::optional<int> bwd_iters;
  std::size_t touched_rows = 0;
};

/// Labelled rows among `nodes` (global ids): their positions and classes.
struct LabeledRows {
  std::vector<std::uint32_t> positions;
  std::vector<int> classes;
};

inline LabeledRows labeled_rows(const Labels& labels, std::span<const NodeId> nodes) {
  LabeledRows r;
  for (std::uint32_t i = 0; i < nodes.size(); ++i) {
    if (labels.train.contains(nodes[i])) {
      r.positions.push_back(i);
      r.classes.push_back(labels.classes[nodes[i]]);
    }
  }
  return r;
}

/// Output-layer pullback for the given rows.
///
/// Returns dlogits (rows x K, zero for unlabelled rows) of the loss
/// sum_{labelled rows} CE / |V_L|, together with that partial loss. The
/// weighting makes rows of a batch contribute exactly what they contribute to
/// the full-graph mean loss.
struct OutputPullback {
  double loss = 0.0;
  DenseMatrix dlogits;
};

inline OutputPullback output_pullback(const DenseMatrix& logits, const LabeledRows& rows,
                                      std::size_t num_labeled_total) {
  OutputPullback out{0.0, DenseMatrix(logits.rows(), logits.cols())};
  if (rows.positions.empty()) return out;
  const double weight =
      static_cast<double>(rows.positions.size()) / static_cast<double>(num_labeled_total);
  auto x = softmax_xent(gather_rows(logits, rows.positions), rows.classes, weight);
  scatter_rows(x.dlogits, rows.positions, out.dlogits);
  out.loss = x.loss;
  return out;
}

}  // namespace lmc
