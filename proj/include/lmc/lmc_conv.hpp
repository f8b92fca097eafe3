#pragma once

// Mini-batch training of the convolutional model with historical values and
// local message compensation. The GAS variant reuses stale halo embeddings and
// drops every halo message in the backward pass; Cluster-GCN trains on the
// induced subgraph of the batch.

#include <vector>

#include "lmc/aggregate.hpp"
#include "lmc/conv_gnn.hpp"
#include "lmc/dense.hpp"
#include "lmc/history.hpp"
#include "lmc/problem.hpp"
#include "lmc/sampling.hpp"

namespace lmc {

enum class Compensation { Lmc, Gas };

struct ConvStepOptions {
  Compensation mode = Compensation::Lmc;
  bool zero_backward_compensation = false;  // keep C_f, set C_b = 0
  bool record_compensation = false;
};

/// Everything a step computes in the batch's local id space.
struct ConvBatchState {
  std::vector<DenseMatrix> local_H;    // [l]: core rows (fresh) then halo1 rows (compensated)
  std::vector<DenseMatrix> core_M;     // [l]: aggregated inputs of core rows
  std::vector<DenseMatrix> core_mask;  // [l]
  std::vector<DenseMatrix> halo_mask;  // [l]: masks of the halo recomputation (LMC only)
  std::vector<DenseMatrix> local_V;    // [l]: core rows then halo1 rows
  std::vector<DenseMatrix> backward_compensation;  // [l]: C_b on core rows, if recorded
  DenseMatrix core_dlogits;
  std::vector<double> beta;
  double loss = 0.0;  // w_loss-weighted batch loss
};

inline DenseMatrix mix_rows(const DenseMatrix& stale, const DenseMatrix& fresh, const std::vector<double>& beta) {
  DenseMatrix out(stale.rows(), stale.cols());
  for (std::size_t i = 0; i < stale.rows(); ++i) {
    const double b = beta[i];
    auto o = out.row(i);
    auto s = stale.row(i);
    auto f = fresh.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) o[j] = (1.0 - b) * s[j] + b * f[j];
  }
  return out;
}

inline std::vector<NodeId> inner_nodes(const MiniBatch& b) {
  std::vector<NodeId> v(b.core);
  v.insert(v.end(), b.halo1.begin(), b.halo1.end());
  return v;
}

/// Forward pass; writes Hbar^l for core rows into the history.
inline ConvBatchState lmc_conv_forward(const Problem& p, const MiniBatch& b, const BatchViews& views,
                                       const ConvParams& params, HistoryConv& hist, const std::vector<double>& beta,
                                       const ConvStepOptions& opts, OpCounter* counter = nullptr) {
  const std::size_t L = params.num_layers();
  if (hist.num_layers() != L) throw ShapeError("lmc_conv: history/params layer mismatch");
  if (beta.size() != b.num_halo1()) throw ShapeError("lmc_conv: beta size != halo size");
  const std::size_t nc = b.num_core(), nh = b.num_halo1();
  ConvBatchState s;
  s.beta = beta;
  s.local_H.resize(L + 1);
  s.core_M.resize(L + 1);
  s.core_mask.resize(L + 1);
  s.halo_mask.resize(L + 1);
  s.local_H[0] = gather_rows(p.features, inner_nodes(b));
  for (std::size_t l = 1; l <= L; ++l) {
    const DenseMatrix& W = params.layer(l);
    s.core_M[l] = aggregate(views.core, s.local_H[l - 1], nullptr, Pruned::Reject, counter);
    auto r = relu(matmul(s.core_M[l], W));
    scatter_rows(r.activation, b.core, hist.H[l]);
    DenseMatrix cur(nc + nh, W.cols());
    set_row_block(cur, 0, r.activation);
    if (counter != nullptr) counter->touched_rows += nc;
    if (nh > 0) {
      const DenseMatrix stale = gather_rows(hist.H[l], b.halo1);
      if (opts.mode == Compensation::Lmc) {
        const DenseMatrix Mh = aggregate(views.halo, s.local_H[l - 1], nullptr, Pruned::Drop, counter);
        auto rh = relu(matmul(Mh, W));
        set_row_block(cur, nc, mix_rows(stale, rh.activation, beta));
        s.halo_mask[l] = std::move(rh.mask);
        if (counter != nullptr) counter->touched_rows += nh;
      } else {
        set_row_block(cur, nc, stale);
      }
    }
    s.core_mask[l] = std::move(r.mask);
    s.local_H[l] = std::move(cur);
  }
  return s;
}

/// Backward pass and mini-batch gradient (scaled by B/c). Writes Vbar^l for
/// core rows into the history.
inline GradSet lmc_conv_backward(const Problem& p, const MiniBatch& b, const BatchViews& views,
                                 const ConvParams& params, HistoryConv& hist, ConvBatchState& s,
                                 const ConvStepOptions& opts, OpCounter* counter = nullptr) {
  const std::size_t L = params.num_layers();
  const std::size_t nc = b.num_core(), nh = b.num_halo1();
  const bool lmc = opts.mode == Compensation::Lmc;
  const std::size_t VL = p.labels.train.count;
  if (VL == 0) throw ConfigError("lmc_conv: no labelled nodes");

  const DenseMatrix H_core = row_block(s.local_H[L], 0, nc);
  auto pb = output_pullback(matmul(H_core, params.out), labeled_rows(p.labels, b.core), VL);
  s.core_dlogits = std::move(pb.dlogits);
  s.loss = b.scale() * pb.loss;

  s.local_V.assign(L + 1, DenseMatrix());
  s.backward_compensation.assign(L + 1, DenseMatrix());
  DenseMatrix VLmat(nc + nh, params.out.rows());
  set_row_block(VLmat, 0, matmul_nt(s.core_dlogits, params.out));
  if (lmc && nh > 0) {
    // Labelled halo nodes feed back the loss gradient at their compensated
    // embeddings; their loss terms stay out of the batch gradient.
    const DenseMatrix H_halo = row_block(s.local_H[L], nc, nh);
    auto pbh = output_pullback(matmul(H_halo, params.out), labeled_rows(p.labels, b.halo1), VL);
    set_row_block(VLmat, nc, matmul_nt(pbh.dlogits, params.out));
  }
  s.local_V[L] = std::move(VLmat);
  scatter_rows(row_block(s.local_V[L], 0, nc), b.core, hist.V[L]);

  GradSet g;
  g.blocks.resize(L + 1);
  const double scale = b.scale();
  for (std::size_t l = L; l >= 1; --l) {
    const DenseMatrix& W = params.layer(l);
    const DenseMatrix G_core = relu_backward(s.core_mask[l], row_block(s.local_V[l], 0, nc));
    g.blocks[l - 1] = scale_copy(matmul_tn(s.core_M[l], G_core), scale);
    if (l == 1) break;
    DenseMatrix Vprev(nc + nh, W.rows());
    if (!lmc) {
      const DenseMatrix U_core = matmul_nt(G_core, W);
      set_row_block(Vprev, 0, aggregate(views.core_local_only, U_core, nullptr, Pruned::Drop, counter));
      if (nh > 0) set_row_block(Vprev, nc, gather_rows(hist.V[l - 1], b.halo1));
    } else {
      DenseMatrix G(nc + nh, W.cols());
      set_row_block(G, 0, G_core);
      if (nh > 0 && !opts.zero_backward_compensation) {
        set_row_block(G, nc, relu_backward(s.halo_mask[l], row_block(s.local_V[l], nc, nh)));
      }
      const DenseMatrix U = matmul_nt(G, W);
      set_row_block(Vprev, 0, aggregate(views.core, U, nullptr, Pruned::Reject, counter));
      if (opts.record_compensation) {
        s.backward_compensation[l - 1] = aggregate(views.core_halo_only, U, nullptr, Pruned::Drop);
      }
      if (nh > 0) {
        const DenseMatrix Vt = aggregate(views.halo, U, nullptr, Pruned::Drop, counter);
        set_row_block(Vprev, nc, mix_rows(gather_rows(hist.V[l - 1], b.halo1), Vt, s.beta));
      }
    }
    if (counter != nullptr) counter->touched_rows += lmc ? nc + nh : nc;
    scatter_rows(row_block(Vprev, 0, nc), b.core, hist.V[l - 1]);
    s.local_V[l - 1] = std::move(Vprev);
  }
  g.blocks[L] = scale_copy(matmul_tn(H_core, s.core_dlogits), scale);
  return g;
}

struct ConvStepResult {
  GradSet grads;
  StepReport report;
  ConvBatchState state;
};

/// Forward, backward and SGD update for one mini-batch.
inline ConvStepResult lmc_conv_step(const Problem& p, const MiniBatch& b, ConvParams& params, HistoryConv& hist,
                                    const BetaSchedule& schedule, double lr, const ConvStepOptions& opts = {},
                                    std::int64_t step = 0, OpCounter* counter = nullptr) {
  const BatchViews views = make_batch_views(p.adj, b);
  const auto beta = opts.mode == Compensation::Lmc ? beta_for_nodes(b, p.graph, schedule)
                                                   : std::vector<double>(b.num_halo1(), 0.0);
  ConvStepResult res;
  res.state = lmc_conv_forward(p, b, views, params, hist, beta, opts, counter);
  res.grads = lmc_conv_backward(p, b, views, params, hist, res.state, opts, counter);
  for (NodeId v : b.core) hist.last_refreshed[v] = step;
  res.report.step = static_cast<std::size_t>(step);
  res.report.loss = res.state.loss;
  res.report.grad_norm = res.grads.norm();
  if (counter != nullptr) res.report.touched_rows = counter->touched_rows;
  sgd_update(params, res.grads, lr);
  return res;
}

inline ConvStepResult gas_conv_step(const Problem& p, const MiniBatch& b, ConvParams& params, HistoryConv& hist,
                                    double lr, std::int64_t step = 0, OpCounter* counter = nullptr) {
  ConvStepOptions opts;
  opts.mode = Compensation::Gas;
  return lmc_conv_step(p, b, params, hist, BetaSchedule{}, lr, opts, step, counter);
}

/// Induced subgraph of the batch core with its own normalisation.
struct ClusterProblem {
  NormalizedAdjacency adj;
  LocalAdjView view;
  DenseMatrix features;
};

inline ClusterProblem cluster_problem(const Problem& p, const MiniBatch& b) {
  ClusterProblem c;
  const Graph sub = induced_subgraph(p.graph, b.core);
  c.adj = normalized_adjacency(sub);
  c.view = full_view(c.adj);
  c.features = gather_rows(p.features, b.core);
  return c;
}

/// Cluster-GCN gradient on the batch: exact gradient of the w_loss-weighted
/// batch loss on the induced subgraph.
inline ConvStepResult cluster_conv_grads(const Problem& p, const MiniBatch& b, const ConvParams& params,
                                         OpCounter* counter = nullptr) {
  if (p.labels.train.count == 0) throw ConfigError("cluster_conv: no labelled nodes");
  const ClusterProblem c = cluster_problem(p, b);
  const auto cache = forward_full(c.view, c.features, params, counter);
  auto pb = output_pullback(cache.logits, labeled_rows(p.labels, b.core), p.labels.train.count);
  scale(pb.dlogits, b.scale());
  auto g = backward_from_dlogits(c.view, cache, pb.dlogits, params, counter);
  ConvStepResult res;
  res.grads = std::move(g.grads);
  res.report.loss = b.scale() * pb.loss;
  res.report.grad_norm = res.grads.norm();
  res.state.core_dlogits = std::move(pb.dlogits);
  res.state.loss = res.report.loss;
  if (counter != nullptr) res.report.touched_rows = counter->touched_rows;
  return res;
}

inline ConvStepResult cluster_conv_step(const Problem& p, const MiniBatch& b, ConvParams& params, double lr,
                                        std::int64_t step = 0, OpCounter* counter = nullptr) {
  auto res = cluster_conv_grads(p, b, params, counter);
  res.report.step = static_cast<std::size_t>(step);
  sgd_update(params, res.grads, lr);
  return res;
}

}  // namespace lmc
