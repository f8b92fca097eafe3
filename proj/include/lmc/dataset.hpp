#pragma once

// On-disk datasets and the synthetic generators.
//
// A dataset directory holds
//   edges.tsv     u<TAB>v per line, '#' starts a comment
//   features.csv  id,x1,...,xd
//   labels.csv    id,class   (row order defines the dense node order)
//   split.csv     id,train|val|test
// Each CSV may start with a header line whose first field is "id".

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lmc/dense.hpp"
#include "lmc/errors.hpp"
#include "lmc/graph.hpp"
#include "lmc/problem.hpp"
#include "lmc/sampling.hpp"

namespace lmc {

enum class Split : std::uint8_t { Train, Val, Test };

inline Split parse_split(const std::string& s, const std::string& where) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError(where + ": unknown split tag '" + s + "'");
}

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

struct Dataset {
  Graph graph;
  DenseMatrix features;
  std::vector<int> classes;
  std::vector<Split> split;
  int num_classes = 0;

  std::size_t n() const { return graph.n; }
  LabeledSet mask_of(Split s) const {
    std::vector<std::uint8_t> m(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) m[i] = split[i] == s;
    return LabeledSet::from_mask(m);
  }
};

inline Problem to_problem(const Dataset& d) {
  Labels labels{d.classes, d.mask_of(Split::Train), d.num_classes};
  return make_problem(d.graph, d.features, std::move(labels));
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline bool is_header(const std::vector<std::string>& fields) { return !fields.empty() && fields[0] == "id"; }

/// Non-empty, non-comment lines of a CSV, minus an optional "id,..." header.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> read_rows(const std::filesystem::path& path,
                                                                               char sep) {
  std::ifstream f(path);
  if (!f) throw ConfigError("missing file " + path.string());
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    auto fields = split_fields(line, sep);
    if (rows.empty() && is_header(fields)) continue;
    rows.emplace_back(lineno, std::move(fields));
  }
  return rows;
}

inline double parse_real(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ConfigError(where + ": bad number '" + s + "'");
  if (!std::isfinite(v)) throw ConfigError(where + ": non-finite value");
  return v;
}

inline long long parse_int(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) throw ConfigError(where + ": bad integer '" + s + "'");
  return v;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  using detail::parse_int;
  const fs::path labels_path = dir / "labels.csv", feat_path = dir / "features.csv", edge_path = dir / "edges.tsv",
                 split_path = dir / "split.csv";
  for (const auto& p : {labels_path, feat_path, edge_path, split_path}) {
    if (!fs::exists(p)) throw ConfigError("missing file " + p.string());
  }
  Dataset d;
  std::unordered_map<std::string, NodeId> index;
  for (const auto& [lineno, f] : detail::read_rows(labels_path, ',')) {
    const std::string where = labels_path.string() + ":" + std::to_string(lineno);
    if (f.size() != 2) throw ConfigError(where + ": expected id,class");
    if (!index.emplace(f[0], static_cast<NodeId>(d.classes.size())).second) {
      throw ConfigError(where + ": duplicate node id '" + f[0] + "'");
    }
    const long long c = parse_int(f[1], where);
    if (c < 0) throw ConfigError(where + ": negative class");
    d.classes.push_back(static_cast<int>(c));
    d.num_classes = std::max(d.num_classes, static_cast<int>(c) + 1);
  }
  const std::size_t n = d.classes.size();
  if (n == 0) throw ConfigError(labels_path.string() + ": no nodes");
  auto node_of = [&](const std::string& id, const std::string& where) {
    auto it = index.find(id);
    if (it == index.end()) throw ConfigError(where + ": unknown node id '" + id + "'");
    return it->second;
  };

  const auto feat_rows = detail::read_rows(feat_path, ',');
  if (feat_rows.size() != n) {
    throw ConfigError(feat_path.string() + ": " + std::to_string(feat_rows.size()) + " rows for " +
                      std::to_string(n) + " nodes");
  }
  const std::size_t dx = feat_rows.front().second.size() - 1;
  if (dx == 0) throw ConfigError(feat_path.string() + ": no feature columns");
  d.features = DenseMatrix(n, dx);
  std::vector<bool> seen(n, false);
  for (const auto& [lineno, f] : feat_rows) {
    const std::string where = feat_path.string() + ":" + std::to_string(lineno);
    if (f.size() != dx + 1) throw ConfigError(where + ": ragged row (" + std::to_string(f.size() - 1) + " features)");
    const NodeId v = node_of(f[0], where);
    if (seen[v]) throw ConfigError(where + ": duplicate node id '" + f[0] + "'");
    seen[v] = true;
    for (std::size_t j = 0; j < dx; ++j) d.features(v, j) = detail::parse_real(f[j + 1], where);
  }

  std::vector<Edge> edges;
  for (const auto& [lineno, f] : detail::read_rows(edge_path, '\t')) {
    const std::string where = edge_path.string() + ":" + std::to_string(lineno);
    if (f.size() != 2) throw ConfigError(where + ": expected u<TAB>v");
    edges.push_back({node_of(f[0], where), node_of(f[1], where)});
  }
  d.graph = build_graph(edges, n);

  d.split.assign(n, Split::Test);
  std::fill(seen.begin(), seen.end(), false);
  for (const auto& [lineno, f] : detail::read_rows(split_path, ',')) {
    const std::string where = split_path.string() + ":" + std::to_string(lineno);
    if (f.size() != 2) throw ConfigError(where + ": expected id,split");
    const NodeId v = node_of(f[0], where);
    if (seen[v]) throw ConfigError(where + ": duplicate node id '" + f[0] + "'");
    seen[v] = true;
    d.split[v] = parse_split(f[1], where);
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (!seen[v]) throw ConfigError(split_path.string() + ": no split for node " + std::to_string(v));
  }
  return d;
}

inline void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("labels.csv");
    f << "id,class\n";
    for (std::size_t v = 0; v < d.n(); ++v) f << v << ',' << d.classes[v] << '\n';
  }
  {
    auto f = open("features.csv");
    f << "id";
    for (std::size_t j = 0; j < d.features.cols(); ++j) f << ",x" << j + 1;
    f << '\n';
    for (std::size_t v = 0; v < d.n(); ++v) {
      f << v;
      for (std::size_t j = 0; j < d.features.cols(); ++j) f << ',' << detail::fmt(d.features(v, j));
      f << '\n';
    }
  }
  {
    auto f = open("edges.tsv");
    f << "# u\tv\n";
    for (NodeId u = 0; u < d.n(); ++u)
      for (NodeId v : d.graph.neighbors_of(u))
        if (u < v) f << u << '\t' << v << '\n';
  }
  {
    auto f = open("split.csv");
    f << "id,split\n";
    for (std::size_t v = 0; v < d.n(); ++v) f << v << ',' << to_string(d.split[v]) << '\n';
  }
}

enum class SyntheticKind { TwoCluster, ChainLabel };

inline SyntheticKind parse_synthetic_kind(const std::string& s) {
  if (s == "two-cluster") return SyntheticKind::TwoCluster;
  if (s == "chain-label") return SyntheticKind::ChainLabel;
  throw ConfigError("unknown dataset kind '" + s + "' (expected two-cluster or chain-label)");
}

struct SyntheticOptions {
  SyntheticKind kind = SyntheticKind::TwoCluster;
  std::size_t n = 400;
  std::size_t feature_dim = 8;
  double noise = 1.0;
  std::uint64_t seed = 0;
  double intra_degree = 8.0;  // two-cluster: expected neighbours in the own cluster
  double inter_degree = 1.0;  // two-cluster: expected neighbours in the other cluster
  std::size_t chain_length = 10;
  double train_fraction = 0.5;
  double val_fraction = 0.25;
};

namespace detail {

inline std::vector<Split> random_splits(std::size_t n, double train, double val, Rng& rng) {
  if (train < 0.0 || val < 0.0 || train + val > 1.0) throw ConfigError("gen: split fractions must lie in [0, 1]");
  std::vector<NodeId> order(n);
  for (NodeId v = 0; v < n; ++v) order[v] = v;
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val * static_cast<double>(n)));
  std::vector<Split> s(n, Split::Test);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) s[order[i]] = Split::Train;
    else if (i < n_train + n_val) s[order[i]] = Split::Val;
  }
  return s;
}

}  // namespace detail

/// Two-cluster: nodes [0, n/2) form class 0 and the rest class 1. Pairs inside
/// a cluster are joined with probability intra_degree / (size - 1), pairs
/// across with inter_degree / other_size. Features are the class mean (a
/// random unit direction, negated for class 1) plus noise * N(0, 1).
///
/// Chain-label: disjoint paths of chain_length nodes. The first node of a
/// chain carries a one-hot class code plus noise in its features; all other
/// nodes have zero features. Every node is labelled with its chain's class.
inline Dataset gen_synthetic(const SyntheticOptions& o) {
  if (o.n < 4) throw ConfigError("gen: n must be at least 4");
  if (o.feature_dim < 2) throw ConfigError("gen: feature_dim must be at least 2");
  if (o.noise < 0.0) throw ConfigError("gen: noise must be non-negative");
  Rng rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Dataset d;
  d.num_classes = 2;
  d.classes.resize(o.n);
  d.features = DenseMatrix(o.n, o.feature_dim);
  std::vector<Edge> edges;
  if (o.kind == SyntheticKind::TwoCluster) {
    const std::size_t n0 = o.n / 2, n1 = o.n - n0;
    for (std::size_t v = 0; v < o.n; ++v) d.classes[v] = v < n0 ? 0 : 1;
    std::vector<double> mean(o.feature_dim);
    double norm = 0.0;
    for (double& m : mean) {
      m = normal(rng);
      norm += m * m;
    }
    for (double& m : mean) m /= std::sqrt(norm);
    for (std::size_t v = 0; v < o.n; ++v) {
      const double sign = d.classes[v] == 0 ? 1.0 : -1.0;
      for (std::size_t j = 0; j < o.feature_dim; ++j) d.features(v, j) = sign * mean[j] + o.noise * normal(rng);
    }
    const double p0 = std::min(1.0, o.intra_degree / static_cast<double>(n0 - 1));
    const double p1 = std::min(1.0, o.intra_degree / static_cast<double>(n1 - 1));
    const double px = std::min(1.0, o.inter_degree / static_cast<double>(std::max(n0, n1)));
    for (NodeId u = 0; u < o.n; ++u) {
      for (NodeId v = u + 1; v < o.n; ++v) {
        const bool same = d.classes[u] == d.classes[v];
        const double p = same ? (d.classes[u] == 0 ? p0 : p1) : px;
        if (unif(rng) < p) edges.push_back({u, v});
      }
    }
  } else {
    if (o.chain_length < 2) throw ConfigError("gen: chain_length must be at least 2");
    std::size_t chain = 0;
    for (std::size_t start = 0; start < o.n; start += o.chain_length, ++chain) {
      const std::size_t end = std::min(o.n, start + o.chain_length);
      const int cls = static_cast<int>(chain % 2);
      for (std::size_t v = start; v < end; ++v) {
        d.classes[v] = cls;
        if (v + 1 < end) edges.push_back({static_cast<NodeId>(v), static_cast<NodeId>(v + 1)});
      }
      d.features(start, static_cast<std::size_t>(cls)) = 1.0;
      for (std::size_t j = 0; j < o.feature_dim; ++j) d.features(start, j) += o.noise * normal(rng);
    }
  }
  d.graph = build_graph(edges, o.n);
  d.split = detail::random_splits(o.n, o.train_fraction, o.val_fraction, rng);
  return d;
}

/// Erdos-Renyi graph with Gaussian features, uniform random classes and a
/// random labelled subset; used by the gradient oracles.
inline Problem random_problem(std::size_t n, std::size_t feature_dim, int num_classes, double avg_degree,
                              std::uint64_t seed, double labeled_fraction = 0.7) {
  if (n < 2) throw ConfigError("random_problem: need at least 2 nodes");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double p = std::min(1.0, avg_degree / static_cast<double>(n - 1));
  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (unif(rng) < p) edges.push_back({u, v});
  DenseMatrix x(n, feature_dim);
  for (double& v : x.values()) v = normal(rng);
  std::uniform_int_distribution<int> cls(0, num_classes - 1);
  std::vector<int> classes(n);
  for (int& c : classes) c = cls(rng);
  std::vector<std::uint8_t> mask(n, 0);
  std::size_t count = 0;
  for (auto& m : mask) {
    m = unif(rng) < labeled_fraction ? 1 : 0;
    count += m;
  }
  if (count == 0) mask[0] = 1;
  return make_problem(build_graph(edges, n), std::move(x),
                      Labels{std::move(classes), LabeledSet::from_mask(std::move(mask)), num_classes});
}

}  // namespace lmc
