#pragma once

// Restricted sparse-dense aggregation: out_i = sum_j A_hat_ij * rows_j over
// the closed neighbourhood of each target, where each neighbour is either a
// listed source or pruned. Pruned neighbours are filled from a fallback
// matrix or dropped.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lmc/dense.hpp"
#include "lmc/errors.hpp"
#include "lmc/graph.hpp"
#include "lmc/sampling.hpp"

namespace lmc {

/// Per-step work counters used to check that a step touches only the
/// neighbourhood of its batch.
struct OpCounter {
  std::size_t touched_rows = 0;  // embedding rows computed or written
  std::size_t source_rows = 0;   // neighbour rows read by aggregations

  void reset() { *this = {}; }
};

struct LocalAdjView {
  struct Entry {
    std::uint32_t source;  // local id into the source / fallback matrices
    double weight;
    bool pruned;
  };
  std::vector<std::uint32_t> targets;  // local ids (informational)
  std::vector<std::size_t> offsets{0};
  std::vector<Entry> entries;  // closed neighbourhood, self first, then CSR order

  std::size_t num_targets() const { return offsets.size() - 1; }
  std::span<const Entry> entries_of(std::size_t t) const {
    return {entries.data() + offsets[t], offsets[t + 1] - offsets[t]};
  }
  bool has_pruned() const {
    for (const auto& e : entries)
      if (e.pruned) return true;
    return false;
  }
};

/// Builds a view for global `targets`. `local_of` maps every closed neighbour
/// of a target to a local id; `is_source` decides listed vs pruned.
template <typename LocalOf, typename IsSource>
LocalAdjView make_view(const NormalizedAdjacency& adj, std::span<const NodeId> targets,
                       LocalOf&& local_of, IsSource&& is_source) {
  const Graph& g = *adj.graph;
  LocalAdjView view;
  view.targets.reserve(targets.size());
  view.offsets.reserve(targets.size() + 1);
  for (NodeId t : targets) {
    const std::int64_t self = local_of(t);
    if (self < 0) throw ConfigError("make_view: target without local id");
    view.targets.push_back(static_cast<std::uint32_t>(self));
    view.entries.push_back({static_cast<std::uint32_t>(self), adj.diag[t], !is_source(t)});
    auto nb = g.neighbors_of(t);
    auto w = adj.values_of(t);
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const std::int64_t lid = local_of(nb[k]);
      if (lid < 0) throw ConfigError("make_view: neighbour outside the local id space");
      view.entries.push_back({static_cast<std::uint32_t>(lid), w[k], !is_source(nb[k])});
    }
    view.offsets.push_back(view.entries.size());
  }
  return view;
}

/// Whole-graph view with identity local ids and nothing pruned.
inline LocalAdjView full_view(const NormalizedAdjacency& adj) {
  std::vector<NodeId> all(adj.n());
  for (NodeId v = 0; v < all.size(); ++v) all[v] = v;
  return make_view(
      adj, all, [](NodeId v) { return static_cast<std::int64_t>(v); }, [](NodeId) { return true; });
}

enum class Pruned { Reject, Drop };

/// out_t = sum over listed entries of w * source_rows(entry) plus, for pruned
/// entries, w * fallback_rows(entry) when a fallback is given. Without a
/// fallback, pruned entries are dropped under Pruned::Drop and rejected
/// otherwise.
inline DenseMatrix aggregate(const LocalAdjView& view, const DenseMatrix& source_rows,
                             const DenseMatrix* fallback_rows = nullptr,
                             Pruned policy = Pruned::Reject, OpCounter* counter = nullptr) {
  const std::size_t d = source_rows.cols();
  if (fallback_rows != nullptr && fallback_rows->cols() != d) {
    throw ShapeError("aggregate: fallback " + shape_str(*fallback_rows) + " vs source " +
                     shape_str(source_rows));
  }
  DenseMatrix out(view.num_targets(), d);
  std::size_t reads = 0;
  for (std::size_t t = 0; t < view.num_targets(); ++t) {
    auto acc = out.row(t);
    for (const auto& e : view.entries_of(t)) {
      const DenseMatrix* src = &source_rows;
      if (e.pruned) {
        if (fallback_rows != nullptr) {
          src = fallback_rows;
        } else if (policy == Pruned::Drop) {
          continue;
        } else {
          throw ConfigError("aggregate: pruned neighbour without fallback");
        }
      }
      if (e.source >= src->rows()) throw ShapeError("aggregate: source row out of range");
      auto r = src->row(e.source);
      for (std::size_t j = 0; j < d; ++j) acc[j] += e.weight * r[j];
      ++reads;
    }
  }
  if (counter != nullptr) counter->source_rows += reads;
  return out;
}

/// Views over a mini-batch, all in the batch's local id space.
struct BatchViews {
  LocalAdjView core;             // targets core, sources core U halo1 (nothing pruned)
  LocalAdjView core_local_only;  // targets core, halo1 entries pruned
  LocalAdjView core_halo_only;   // targets core, core entries pruned
  LocalAdjView halo;             // targets halo1, sources core U halo1, halo2 pruned
  LocalAdjView halo_full;        // targets halo1, sources core U halo1 U halo2
};

inline BatchViews make_batch_views(const NormalizedAdjacency& adj, const MiniBatch& b) {
  auto local_of = [&b](NodeId v) { return b.local_id(v); };
  const auto n_core = b.num_core();
  const auto n_inner = b.num_core() + b.num_halo1();
  auto lid = [&b](NodeId v) { return static_cast<std::size_t>(b.local_id(v)); };
  BatchViews v;
  v.core = make_view(adj, b.core, local_of, [](NodeId) { return true; });
  v.core_local_only = make_view(adj, b.core, local_of, [&](NodeId u) { return lid(u) < n_core; });
  v.core_halo_only = make_view(adj, b.core, local_of, [&](NodeId u) { return lid(u) >= n_core; });
  v.halo = make_view(adj, b.halo1, local_of, [&](NodeId u) { return lid(u) < n_inner; });
  v.halo_full = make_view(adj, b.halo1, local_of, [](NodeId) { return true; });
  return v;
}

}  // namespace lmc
