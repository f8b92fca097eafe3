#pragma once

// Mini-batch training of the equilibrium model. Each step refreshes the core
// rows of the histories with one Jacobi sweep, solves the batch-local forward
// and backward fixed points with halo messages taken from the histories, and
// applies the projected SGD update.

#include <vector>

#include "lmc/aggregate.hpp"
#include "lmc/dense.hpp"
#include "lmc/history.hpp"
#include "lmc/lmc_conv.hpp"
#include "lmc/problem.hpp"
#include "lmc/rec_gnn.hpp"
#include "lmc/sampling.hpp"

namespace lmc {

struct RecStepOptions {
  Compensation mode = Compensation::Lmc;
  SolverOptions solver;
};

struct RecBatchState {
  DenseMatrix H_hat;      // core rows
  DenseMatrix Z_hat;
  DenseMatrix M_hat;      // local aggregation plus forward compensation
  DenseMatrix forward_compensation;
  DenseMatrix backward_compensation;
  DenseMatrix V_hat;      // core rows
  DenseMatrix core_dlogits;
  FixedPointTrace fwd, bwd;
  double loss = 0.0;
};

struct RecStepResult {
  GradSet grads;
  StepReport report;
  RecBatchState state;
};

/// Computes the batch gradient (scaled by B/c) and refreshes the histories.
inline RecStepResult lmc_rec_grads(const Problem& p, const MiniBatch& b, const RecParams& params, HistoryRec& hist,
                                   const RecStepOptions& opts, OpCounter* counter = nullptr) {
  const std::size_t nc = b.num_core(), nh = b.num_halo1();
  const std::size_t VL = p.labels.train.count;
  if (VL == 0) throw ConfigError("lmc_rec: no labelled nodes");
  const BatchViews views = make_batch_views(p.adj, b);
  const std::vector<NodeId> inner = inner_nodes(b);
  const DenseMatrix Xc = gather_rows(p.features, b.core);
  const DenseMatrix Bc = input_injection(Xc, params);
  const auto labelled = labeled_rows(p.labels, b.core);
  RecStepResult res;
  RecBatchState& s = res.state;

  // Jacobi refresh of the core rows of Hbar.
  const DenseMatrix Hbar_inner = gather_rows(hist.H, inner);
  {
    const DenseMatrix Ma = aggregate(views.core, Hbar_inner, nullptr, Pruned::Reject, counter);
    const DenseMatrix Za = add(matmul(Ma, params.W), Bc);
    scatter_rows(relu(Za).activation, b.core, hist.H);
    scatter_rows(Za, b.core, hist.Z);
    if (counter != nullptr) counter->touched_rows += nc;
  }

  // Batch-local forward fixed point with the halo messages frozen.
  s.forward_compensation = aggregate(views.core_halo_only, Hbar_inner, nullptr, Pruned::Drop, counter);
  const DenseMatrix H0 = gather_rows(hist.H, b.core);
  s.H_hat = picard(
      [&](const DenseMatrix& h) {
        s.M_hat = add(aggregate(views.core_local_only, h, nullptr, Pruned::Drop, counter), s.forward_compensation);
        s.Z_hat = add(matmul(s.M_hat, params.W), Bc);
        return relu(s.Z_hat).activation;
      },
      H0, opts.solver, s.fwd);
  require_converged(s.fwd, "batch forward solve");
  const DenseMatrix mask_hat = relu_mask(s.Z_hat);

  // Jacobi refresh of the core rows of Vbar, against the refreshed Hbar.
  {
    const DenseMatrix Vbar_inner = gather_rows(hist.V, inner);
    const DenseMatrix Zbar_inner = gather_rows(hist.Z, inner);
    const DenseMatrix Ubar = matmul_nt(hadamard(relu_mask(Zbar_inner), Vbar_inner), params.W);
    const DenseMatrix Ha = gather_rows(hist.H, b.core);
    auto pba = output_pullback(matmul(Ha, params.out), labelled, VL);
    const DenseMatrix dHa = matmul_nt(pba.dlogits, params.out);
    scatter_rows(add(aggregate(views.core, Ubar, nullptr, Pruned::Reject, counter), dHa), b.core, hist.V);
    if (counter != nullptr) counter->touched_rows += nc;
  }

  // Backward compensation from the halo: A_hat_{core,halo} (relu'(Z_halo) . Vbar_halo) W^T,
  // with Z_halo recomputed from the fresh core embeddings.
  s.backward_compensation = DenseMatrix(nc, params.W.rows());
  if (opts.mode == Compensation::Lmc && nh > 0) {
    DenseMatrix Hmix(b.num_local(), params.W.cols());
    set_row_block(Hmix, 0, s.H_hat);
    set_row_block(Hmix, nc, row_block(Hbar_inner, nc, nh));
    if (b.num_halo2() > 0) set_row_block(Hmix, nc + nh, gather_rows(hist.H, b.halo2));
    const DenseMatrix Xh = gather_rows(p.features, b.halo1);
    const DenseMatrix Zh = add(matmul(aggregate(views.halo_full, Hmix, nullptr, Pruned::Reject, counter), params.W),
                               input_injection(Xh, params));
    const DenseMatrix Vbar_halo = gather_rows(hist.V, b.halo1);
    DenseMatrix U(nc + nh, params.W.rows());
    set_row_block(U, nc, matmul_nt(hadamard(relu_mask(Zh), Vbar_halo), params.W));
    s.backward_compensation = aggregate(views.core_halo_only, U, nullptr, Pruned::Drop, counter);
    if (counter != nullptr) counter->touched_rows += nh;
  }

  // Batch-local adjoint fixed point.
  const DenseMatrix logits = matmul(s.H_hat, params.out);
  auto pb = output_pullback(logits, labelled, VL);
  s.core_dlogits = std::move(pb.dlogits);
  s.loss = b.scale() * pb.loss;
  const DenseMatrix rhs = add(matmul_nt(s.core_dlogits, params.out), s.backward_compensation);
  const DenseMatrix V0 = gather_rows(hist.V, b.core);
  s.V_hat = picard(
      [&](const DenseMatrix& v) {
        const DenseMatrix u = matmul_nt(hadamard(mask_hat, v), params.W);
        return add(aggregate(views.core_local_only, u, nullptr, Pruned::Drop, counter), rhs);
      },
      V0, opts.solver, s.bwd);
  require_converged(s.bwd, "batch backward solve");

  res.grads = rec_grads(s.M_hat, mask_hat, s.V_hat, Xc, s.H_hat, s.core_dlogits);
  for (auto& blk : res.grads.blocks) scale(blk, b.scale());
  res.report.loss = s.loss;
  res.report.grad_norm = res.grads.norm();
  res.report.fwd_iters = s.fwd.iterations;
  res.report.bwd_iters = s.bwd.iterations;
  if (counter != nullptr) res.report.touched_rows = counter->touched_rows;
  return res;
}

inline RecStepResult lmc_rec_step(const Problem& p, const MiniBatch& b, RecParams& params, HistoryRec& hist,
                                  double lr, const RecStepOptions& opts = {}, std::int64_t step = 0,
                                  OpCounter* counter = nullptr) {
  auto res = lmc_rec_grads(p, b, params, hist, opts, counter);
  for (NodeId v : b.core) hist.last_refreshed[v] = step;
  res.report.step = static_cast<std::size_t>(step);
  sgd_update(params, res.grads, lr);
  return res;
}

inline RecStepResult gas_rec_step(const Problem& p, const MiniBatch& b, RecParams& params, HistoryRec& hist,
                                  double lr, SolverOptions solver = {}, std::int64_t step = 0,
                                  OpCounter* counter = nullptr) {
  return lmc_rec_step(p, b, params, hist, lr, RecStepOptions{Compensation::Gas, solver}, step, counter);
}

/// Cluster-GCN for the equilibrium model: exact implicit gradient of the
/// w_loss-weighted batch loss on the induced subgraph.
inline RecStepResult cluster_rec_grads(const Problem& p, const MiniBatch& b, const RecParams& params,
                                       const SolverOptions& solver, OpCounter* counter = nullptr) {
  if (p.labels.train.count == 0) throw ConfigError("cluster_rec: no labelled nodes");
  const ClusterProblem c = cluster_problem(p, b);
  RecStepResult res;
  RecBatchState& s = res.state;
  RecState st = solve_forward(c.view, c.features, params, solver, nullptr, counter);
  require_converged(st.trace, "cluster forward solve");
  auto pb = output_pullback(matmul(st.H, params.out), labeled_rows(p.labels, b.core), p.labels.train.count);
  scale(pb.dlogits, b.scale());
  RecAux aux = solve_backward(c.view, st, matmul_nt(pb.dlogits, params.out), params, solver, nullptr, counter);
  require_converged(aux.trace, "cluster backward solve");
  res.grads = rec_grads(st.M, st.mask, aux.V, c.features, st.H, pb.dlogits);
  s.loss = b.scale() * pb.loss;
  s.fwd = st.trace;
  s.bwd = aux.trace;
  s.H_hat = std::move(st.H);
  s.V_hat = std::move(aux.V);
  s.core_dlogits = std::move(pb.dlogits);
  res.report.loss = s.loss;
  res.report.grad_norm = res.grads.norm();
  res.report.fwd_iters = s.fwd.iterations;
  res.report.bwd_iters = s.bwd.iterations;
  if (counter != nullptr) res.report.touched_rows = counter->touched_rows + b.num_core();
  return res;
}

inline RecStepResult cluster_rec_step(const Problem& p, const MiniBatch& b, RecParams& params, double lr,
                                      const SolverOptions& solver = {}, std::int64_t step = 0,
                                      OpCounter* counter = nullptr) {
  auto res = cluster_rec_grads(p, b, params, solver, counter);
  res.report.step = static_cast<std::size_t>(step);
  sgd_update(params, res.grads, lr);
  return res;
}

}  // namespace lmc
