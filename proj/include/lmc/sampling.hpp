#pragma once

// Node partitions and one-shot subgraph mini-batches (core + 1-hop and 2-hop
// halos) with the reweighting that keeps mini-batch gradients unbiased.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lmc/errors.hpp"
#include "lmc/graph.hpp"

namespace lmc {

using Rng = std::mt19937_64;

struct Partition {
  std::size_t num_parts = 0;
  std::vector<std::uint32_t> part_of;
  std::vector<std::vector<NodeId>> parts;  // each sorted ascending
};

inline Partition partition_from_assignment(std::vector<std::uint32_t> part_of, std::size_t num_parts) {
  Partition p;
  p.num_parts = num_parts;
  p.parts.resize(num_parts);
  for (NodeId v = 0; v < part_of.size(); ++v) {
    if (part_of[v] >= num_parts) throw ConfigError("partition: part id out of range");
    p.parts[part_of[v]].push_back(v);
  }
  for (const auto& part : p.parts) {
    if (part.empty()) throw ConfigError("partition: empty part");
  }
  p.part_of = std::move(part_of);
  return p;
}

inline void check_part_count(const Graph& g, std::size_t num_parts) {
  if (num_parts < 1 || num_parts > g.n) {
    throw ConfigError("partition: need 1 <= B <= n, got B=" + std::to_string(num_parts) +
                      " n=" + std::to_string(g.n));
  }
}

/// Seeded shuffle split into B parts whose sizes differ by at most one.
inline Partition partition_random(const Graph& g, std::size_t num_parts, std::uint64_t seed) {
  check_part_count(g, num_parts);
  std::vector<NodeId> order(g.n);
  for (NodeId v = 0; v < g.n; ++v) order[v] = v;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::uint32_t> part_of(g.n);
  const std::size_t base = g.n / num_parts, extra = g.n % num_parts;
  std::size_t pos = 0;
  for (std::size_t p = 0; p < num_parts; ++p) {
    const std::size_t size = base + (p < extra ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) part_of[order[pos++]] = static_cast<std::uint32_t>(p);
  }
  return partition_from_assignment(std::move(part_of), num_parts);
}

namespace detail {
constexpr std::uint32_t kUnassigned = std::numeric_limits<std::uint32_t>::max();

inline std::vector<std::size_t> bfs_distances(const Graph& g, std::span<const NodeId> sources) {
  constexpr auto inf = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(g.n, inf);
  std::deque<NodeId> queue;
  for (NodeId s : sources) {
    dist[s] = 0;
    queue.push_back(s);
  }
  while (!queue.empty()) {
    const NodeId v = queue.front();
    queue.pop_front();
    for (NodeId u : g.neighbors_of(v)) {
      if (dist[u] == inf) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
    }
  }
  return dist;
}
}  // namespace detail

/// Greedy BFS region growing, a METIS stand-in.
///
/// Roots: a seeded random first root, then repeatedly the node farthest from
/// all chosen roots (unreachable counts as farthest, ties to the lowest id).
/// Regions grow round-robin, one node per turn, capped at ceil(n/B)+1 nodes.
/// Nodes the growth cannot reach go to an adjacent part with room, else to the
/// smallest part.
inline Partition partition_clustered(const Graph& g, std::size_t num_parts, std::uint64_t seed) {
  check_part_count(g, num_parts);
  const std::size_t cap = (g.n + num_parts - 1) / num_parts + 1;
  Rng rng(seed);
  std::vector<NodeId> roots;
  roots.push_back(static_cast<NodeId>(std::uniform_int_distribution<std::size_t>(0, g.n - 1)(rng)));
  while (roots.size() < num_parts) {
    auto dist = detail::bfs_distances(g, roots);
    for (NodeId r : roots) dist[r] = 0;
    NodeId best = 0;
    std::size_t best_dist = 0;
    bool found = false;
    for (NodeId v = 0; v < g.n; ++v) {
      if (std::find(roots.begin(), roots.end(), v) != roots.end()) continue;
      if (!found || dist[v] > best_dist) {
        best = v;
        best_dist = dist[v];
        found = true;
      }
    }
    roots.push_back(best);
  }

  std::vector<std::uint32_t> part_of(g.n, detail::kUnassigned);
  std::vector<std::size_t> sizes(num_parts, 1);
  std::vector<std::deque<NodeId>> frontier(num_parts);
  std::vector<std::size_t> scan(g.n, 0);  // next neighbor index to inspect
  for (std::size_t p = 0; p < num_parts; ++p) {
    part_of[roots[p]] = static_cast<std::uint32_t>(p);
    frontier[p].push_back(roots[p]);
  }
  bool progress = true;
  while (progress) {
    progress = false;
    for (std::size_t p = 0; p < num_parts; ++p) {
      if (sizes[p] >= cap) continue;
      auto& q = frontier[p];
      while (!q.empty()) {
        const NodeId v = q.front();
        auto nb = g.neighbors_of(v);
        while (scan[v] < nb.size() && part_of[nb[scan[v]]] != detail::kUnassigned) ++scan[v];
        if (scan[v] == nb.size()) {
          q.pop_front();
          continue;
        }
        const NodeId u = nb[scan[v]];
        part_of[u] = static_cast<std::uint32_t>(p);
        ++sizes[p];
        q.push_back(u);
        progress = true;
        break;
      }
    }
  }

  // Leftovers: repeatedly attach nodes adjacent to a part with room.
  bool changed = true;
  while (changed) {
    changed = false;
    for (NodeId v = 0; v < g.n; ++v) {
      if (part_of[v] != detail::kUnassigned) continue;
      std::uint32_t choice = detail::kUnassigned;
      for (NodeId u : g.neighbors_of(v)) {
        const auto pu = part_of[u];
        if (pu == detail::kUnassigned || sizes[pu] >= cap) continue;
        if (choice == detail::kUnassigned || sizes[pu] < sizes[choice]) choice = pu;
      }
      if (choice != detail::kUnassigned) {
        part_of[v] = choice;
        ++sizes[choice];
        changed = true;
      }
    }
  }
  for (NodeId v = 0; v < g.n; ++v) {
    if (part_of[v] != detail::kUnassigned) continue;
    auto smallest = static_cast<std::uint32_t>(std::min_element(sizes.begin(), sizes.end()) - sizes.begin());
    part_of[v] = smallest;
    ++sizes[smallest];
  }
  return partition_from_assignment(std::move(part_of), num_parts);
}

inline std::size_t cut_edges(const Graph& g, const Partition& p) {
  std::size_t cut = 0;
  for (NodeId v = 0; v < g.n; ++v)
    for (NodeId u : g.neighbors_of(v))
      if (v < u && p.part_of[v] != p.part_of[u]) ++cut;
  return cut;
}

/// Training-label membership. `count` is |V_L|.
struct LabeledSet {
  std::vector<std::uint8_t> mask;
  std::size_t count = 0;

  static LabeledSet from_mask(std::vector<std::uint8_t> m) {
    LabeledSet s;
    s.count = static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
    s.mask = std::move(m);
    return s;
  }
  static LabeledSet all(std::size_t n) { return from_mask(std::vector<std::uint8_t>(n, 1)); }
  bool contains(NodeId v) const { return mask[v] != 0; }
};

/// A sampled subgraph. Local ids are laid out core first, then halo1, then
/// halo2, each block in ascending node order.
struct MiniBatch {
  std::vector<NodeId> core;
  std::vector<NodeId> halo1;  // N(core) \ core
  std::vector<NodeId> halo2;  // N(halo1) \ (core U halo1)
  std::vector<NodeId> labeled_core;
  std::vector<std::uint32_t> sampled_parts;
  std::unordered_map<NodeId, std::uint32_t> local;
  std::size_t num_parts = 0;  // B
  std::size_t total_nodes = 0;
  double w_loss = 0.0;  // B |labeled_core| / (c |V_L|)
  double w_grad = 0.0;  // B |core| / (c |V|)

  std::size_t num_sampled() const { return sampled_parts.size(); }
  /// B / c, the factor that multiplies raw core sums in every gradient.
  double scale() const { return static_cast<double>(num_parts) / static_cast<double>(num_sampled()); }
  std::size_t num_core() const { return core.size(); }
  std::size_t num_halo1() const { return halo1.size(); }
  std::size_t num_halo2() const { return halo2.size(); }
  std::size_t num_local() const { return core.size() + halo1.size() + halo2.size(); }

  std::int64_t local_id(NodeId v) const {
    auto it = local.find(v);
    return it == local.end() ? -1 : static_cast<std::int64_t>(it->second);
  }
  bool in_core(NodeId v) const {
    auto it = local.find(v);
    return it != local.end() && it->second < core.size();
  }
  bool in_halo1(NodeId v) const {
    auto it = local.find(v);
    return it != local.end() && it->second >= core.size() && it->second < core.size() + halo1.size();
  }
  bool labeled_local(std::uint32_t lid, const LabeledSet& labeled) const;
  NodeId global_id(std::uint32_t lid) const {
    if (lid < core.size()) return core[lid];
    lid -= static_cast<std::uint32_t>(core.size());
    if (lid < halo1.size()) return halo1[lid];
    return halo2[lid - halo1.size()];
  }
};

inline bool MiniBatch::labeled_local(std::uint32_t lid, const LabeledSet& labeled) const {
  return labeled.contains(global_id(lid));
}

/// Builds the batch for an explicit set of sampled parts. Cost is linear in
/// the size of the 2-hop neighbourhood of the core, independent of |V|.
inline MiniBatch make_minibatch(const Graph& g, const Partition& p, std::vector<std::uint32_t> parts,
                                const LabeledSet& labeled) {
  if (parts.empty()) throw ConfigError("make_minibatch: no parts sampled");
  std::sort(parts.begin(), parts.end());
  MiniBatch b;
  b.num_parts = p.num_parts;
  b.total_nodes = g.n;
  for (auto id : parts) {
    if (id >= p.num_parts) throw ConfigError("make_minibatch: part id out of range");
    b.core.insert(b.core.end(), p.parts[id].begin(), p.parts[id].end());
  }
  std::sort(b.core.begin(), b.core.end());
  b.sampled_parts = std::move(parts);
  b.local.reserve(b.core.size() * 4);
  for (std::size_t i = 0; i < b.core.size(); ++i) b.local.emplace(b.core[i], static_cast<std::uint32_t>(i));

  auto expand = [&](const std::vector<NodeId>& from, std::vector<NodeId>& out) {
    for (NodeId v : from)
      for (NodeId u : g.neighbors_of(v))
        if (!b.local.contains(u)) out.push_back(u);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    for (NodeId u : out) b.local.emplace(u, static_cast<std::uint32_t>(b.local.size()));
  };
  expand(b.core, b.halo1);
  expand(b.halo1, b.halo2);

  for (NodeId v : b.core)
    if (labeled.contains(v)) b.labeled_core.push_back(v);
  const double ratio = static_cast<double>(p.num_parts) / static_cast<double>(b.num_sampled());
  b.w_loss = labeled.count == 0 ? 0.0
                                : ratio * static_cast<double>(b.labeled_core.size()) /
                                      static_cast<double>(labeled.count);
  b.w_grad = ratio * static_cast<double>(b.core.size()) / static_cast<double>(g.n);
  return b;
}

/// Draws c distinct parts uniformly without replacement.
inline MiniBatch sample_minibatch(const Graph& g, const Partition& p, std::size_t c, Rng& rng,
                                  const LabeledSet& labeled) {
  if (c < 1 || c > p.num_parts) {
    throw ConfigError("sample_minibatch: need 1 <= c <= B, got c=" + std::to_string(c));
  }
  // Partial Fisher-Yates over part ids; O(B) per draw.
  std::vector<std::uint32_t> ids(p.num_parts);
  for (std::uint32_t i = 0; i < ids.size(); ++i) ids[i] = i;
  for (std::size_t i = 0; i < c; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(c);
  return make_minibatch(g, p, std::move(ids), labeled);
}

}  // namespace lmc
