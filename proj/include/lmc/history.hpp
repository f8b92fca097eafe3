#pragma once

// Persistent historical embeddings / auxiliary variables and the per-node
// convex-combination coefficients used for halo nodes.

#include <cstdint>
#include <string>
#include <vector>

#include "lmc/aggregate.hpp"
#include "lmc/conv_gnn.hpp"
#include "lmc/dense.hpp"
#include "lmc/problem.hpp"
#include "lmc/rec_gnn.hpp"

namespace lmc {

/// H[l] for l = 0..L (H[0] pinned to X) and V[l] for l = 1..L. Rows start at
/// zero and are refreshed only when their node is in a batch core.
struct HistoryConv {
  std::vector<DenseMatrix> H;
  std::vector<DenseMatrix> V;  // V[0] unused
  std::vector<std::int64_t> last_refreshed;

  static HistoryConv init(const Problem& p, const ConvParams& params) {
    HistoryConv h;
    h.H.push_back(p.features);
    h.V.emplace_back();
    for (const auto& w : params.weights) {
      h.H.emplace_back(p.n(), w.cols());
      h.V.emplace_back(p.n(), w.cols());
    }
    h.last_refreshed.assign(p.n(), -1);
    return h;
  }
  std::size_t num_layers() const { return H.size() - 1; }
};

/// Equilibrium histories plus cached pre-activations Z so halo messages in
/// the backward pass can be formed without re-solving.
struct HistoryRec {
  DenseMatrix H;
  DenseMatrix V;
  DenseMatrix Z;
  std::vector<std::int64_t> last_refreshed;

  static HistoryRec init(const Problem& p, const RecParams& params) {
    const std::size_t d = params.W.cols();
    return {DenseMatrix(p.n(), d), DenseMatrix(p.n(), d), DenseMatrix(p.n(), d),
            std::vector<std::int64_t>(p.n(), -1)};
  }
};

enum class BetaScore { Square, TwoXMinusSquare, Linear, One };

inline BetaScore parse_beta_score(const std::string& s) {
  if (s == "x2" || s == "x^2" || s == "square") return BetaScore::Square;
  if (s == "2x-x2" || s == "2x-x^2") return BetaScore::TwoXMinusSquare;
  if (s == "x" || s == "linear") return BetaScore::Linear;
  if (s == "1" || s == "one") return BetaScore::One;
  throw ConfigError("unknown beta score '" + s + "' (expected x2, 2x-x2, x or 1)");
}

inline std::string to_string(BetaScore s) {
  switch (s) {
    case BetaScore::Square: return "x2";
    case BetaScore::TwoXMinusSquare: return "2x-x2";
    case BetaScore::Linear: return "x";
    case BetaScore::One: return "1";
  }
  return "?";
}

/// beta_i = score(deg_local(i) / deg_global(i)) * alpha.
struct BetaSchedule {
  double alpha = 0.4;
  BetaScore score = BetaScore::TwoXMinusSquare;

  double operator()(double x) const {
    double s = 1.0;
    switch (score) {
      case BetaScore::Square: s = x * x; break;
      case BetaScore::TwoXMinusSquare: s = 2.0 * x - x * x; break;
      case BetaScore::Linear: s = x; break;
      case BetaScore::One: s = 1.0; break;
    }
    return s * alpha;
  }

  /// Small batches favour 2x - x^2 with alpha 0.4; batches covering at least
  /// 40% of the clusters use a constant score with alpha 1.
  static BetaSchedule defaults_for(std::size_t sampled, std::size_t parts) {
    if (10 * sampled >= 4 * parts) return {1.0, BetaScore::One};
    return {0.4, BetaScore::TwoXMinusSquare};
  }
};

/// Coefficients for halo1 nodes, in halo1 order. deg_local counts neighbours
/// inside core U halo1.
inline std::vector<double> beta_for_nodes(const MiniBatch& b, const Graph& g, const BetaSchedule& schedule) {
  if (!(schedule.alpha >= 0.0 && schedule.alpha <= 1.0)) {
    throw ConfigError("beta schedule: alpha must lie in [0, 1]");
  }
  const std::size_t inner = b.num_core() + b.num_halo1();
  std::vector<double> beta;
  beta.reserve(b.halo1.size());
  for (NodeId v : b.halo1) {
    std::size_t local_deg = 0;
    for (NodeId u : g.neighbors_of(v)) {
      const auto lid = b.local_id(u);
      if (lid >= 0 && static_cast<std::size_t>(lid) < inner) ++local_deg;
    }
    const double x = static_cast<double>(local_deg) / static_cast<double>(g.degree(v));
    const double value = schedule(x);
    if (!(value >= 0.0 && value <= 1.0)) throw ConfigError("beta outside [0, 1]");
    beta.push_back(value);
  }
  return beta;
}

/// Relative distance of the histories from exact values, over layers 1..L:
/// sqrt(sum_l ||Hbar^l - H^l||^2 / sum_l ||H^l||^2).
inline double stacked_rel_err(const std::vector<DenseMatrix>& approx, const std::vector<DenseMatrix>& exact) {
  double diff = 0.0, base = 0.0;
  for (std::size_t l = 1; l < exact.size(); ++l) {
    const double d = fro_norm(subtract(approx[l], exact[l]));
    const double e = fro_norm(exact[l]);
    diff += d * d;
    base += e * e;
  }
  if (base == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(diff / base);
}

}  // namespace lmc
