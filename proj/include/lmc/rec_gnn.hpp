#pragma once

// Recurrent (equilibrium) GCN: H = relu(A_hat H W + X P + 1 c^T) solved by
// Picard iteration, with implicit gradients from the adjoint fixed point
// V = A_hat (relu'(Z) . V) W^T + dL/dH.

#include <cmath>
#include <random>
#include <vector>

#include "lmc/aggregate.hpp"
#include "lmc/conv_gnn.hpp"
#include "lmc/dense.hpp"
#include "lmc/problem.hpp"

namespace lmc {

struct RecParams {
  DenseMatrix W;    // d x d
  DenseMatrix P;    // d_x x d
  DenseMatrix c;    // 1 x d
  DenseMatrix out;  // d x K
  double kappa = 0.95;

  GradSet as_blocks() const { return GradSet{{W, P, c, out}}; }
  void set_blocks(const GradSet& g) {
    if (g.blocks.size() != 4) throw ShapeError("RecParams: block count mismatch");
    W = g.blocks[0];
    P = g.blocks[1];
    c = g.blocks[2];
    out = g.blocks[3];
  }
  std::vector<DenseMatrix*> block_refs() { return {&W, &P, &c, &out}; }
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 500;
};

/// Enforces the well-posedness bound on W.
///
/// Node-major storage applies W on the right, so the infinity-norm bound of the
/// column-major recurrence is the largest column abs-sum of W here.
/// Columns above kappa are scaled down to kappa first; rows above kappa are
/// then scaled the same way. Bounding both gives ||W||_2 <= kappa, so each
/// Picard step contracts the Frobenius residual by at least kappa (A_hat has
/// spectral norm 1).
inline DenseMatrix project_wellposed(const DenseMatrix& w, double kappa) {
  if (!(kappa > 0.0 && kappa < 1.0)) throw ConfigError("project_wellposed: kappa must lie in (0, 1)");
  DenseMatrix out = w;
  for (std::size_t j = 0; j < out.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.rows(); ++i) s += std::abs(out(i, j));
    if (s > kappa) {
      const double f = kappa / s;
      for (std::size_t i = 0; i < out.rows(); ++i) out(i, j) *= f;
    }
  }
  for (std::size_t i = 0; i < out.rows(); ++i) {
    double s = 0.0;
    for (double v : out.row(i)) s += std::abs(v);
    if (s > kappa) {
      const double f = kappa / s;
      for (double& v : out.row(i)) v *= f;
    }
  }
  return out;
}

inline RecParams init_rec_params(std::size_t feature_dim, std::size_t hidden, std::size_t num_classes,
                                 double kappa, std::uint64_t seed) {
  Rng rng(seed);
  RecParams p;
  p.kappa = kappa;
  p.W = project_wellposed(glorot(hidden, hidden, rng), kappa);
  p.P = glorot(feature_dim, hidden, rng);
  p.c = DenseMatrix(1, hidden);
  p.out = glorot(hidden, num_classes, rng);
  return p;
}

struct FixedPointTrace {
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> residuals;
};

/// Picard iteration x <- step(x) from `x`, stopping once
/// ||x_k - x_{k-1}||_F / (1 + ||x_{k-1}||_F) <= tol.
template <typename Step>
DenseMatrix picard(Step&& step, DenseMatrix x, const SolverOptions& opts, FixedPointTrace& trace) {
  trace = {};
  for (int k = 1; k <= opts.max_iter; ++k) {
    DenseMatrix next = step(x);
    const double res = fro_norm(subtract(next, x)) / (1.0 + fro_norm(x));
    if (!std::isfinite(res)) throw NumericError("picard: non-finite residual");
    trace.residuals.push_back(res);
    trace.residual = res;
    trace.iterations = k;
    x = std::move(next);
    if (res <= opts.tol) {
      trace.converged = true;
      break;
    }
  }
  return x;
}

struct RecState {
  DenseMatrix H;     // equilibrium embeddings
  DenseMatrix Z;     // pre-activation that produced H
  DenseMatrix M;     // A_hat applied to the previous iterate
  DenseMatrix mask;  // relu'(Z)
  FixedPointTrace trace;
};

struct RecAux {
  DenseMatrix V;
  FixedPointTrace trace;
};

/// X P + 1 c^T for the given feature rows.
inline DenseMatrix input_injection(const DenseMatrix& x, const RecParams& params) {
  DenseMatrix b = matmul(x, params.P);
  add_row_broadcast(b, params.c);
  return b;
}

inline RecState solve_forward(const LocalAdjView& view, const DenseMatrix& x, const RecParams& params,
                              const SolverOptions& opts, const DenseMatrix* init = nullptr,
                              OpCounter* counter = nullptr) {
  const DenseMatrix b = input_injection(x, params);
  RecState s;
  DenseMatrix start = init != nullptr ? *init : DenseMatrix(x.rows(), params.W.cols());
  s.H = picard(
      [&](const DenseMatrix& h) {
        s.M = aggregate(view, h, nullptr, Pruned::Reject, counter);
        s.Z = add(matmul(s.M, params.W), b);
        return relu(s.Z).activation;
      },
      std::move(start), opts, s.trace);
  s.mask = relu_mask(s.Z);
  return s;
}

inline RecState solve_forward(const Problem& p, const RecParams& params, const SolverOptions& opts,
                              const DenseMatrix* init = nullptr) {
  return solve_forward(p.full, p.features, params, opts, init);
}

/// Adjoint fixed point V = A_hat (mask . V) W^T + dH.
inline RecAux solve_backward(const LocalAdjView& view, const RecState& state, const DenseMatrix& dH,
                             const RecParams& params, const SolverOptions& opts,
                             const DenseMatrix* init = nullptr, OpCounter* counter = nullptr) {
  RecAux a;
  DenseMatrix start = init != nullptr ? *init : DenseMatrix(dH.rows(), dH.cols());
  a.V = picard(
      [&](const DenseMatrix& v) {
        const DenseMatrix u = matmul_nt(hadamard(state.mask, v), params.W);
        return add(aggregate(view, u, nullptr, Pruned::Reject, counter), dH);
      },
      std::move(start), opts, a.trace);
  return a;
}

/// Parameter gradients by the vector-Jacobian product at the equilibrium:
/// dW = M^T G, dP = X^T G, dc = 1^T G with G = relu'(Z) . V, and
/// dW_out = H^T dlogits.
inline GradSet rec_grads(const DenseMatrix& M, const DenseMatrix& mask, const DenseMatrix& V,
                         const DenseMatrix& x, const DenseMatrix& H, const DenseMatrix& dlogits) {
  const DenseMatrix G = hadamard(mask, V);
  return GradSet{{matmul_tn(M, G), matmul_tn(x, G), column_sums(G), matmul_tn(H, dlogits)}};
}

inline GradSet rec_grads(const Problem& p, const RecState& state, const RecAux& aux,
                         const DenseMatrix& dlogits) {
  return rec_grads(state.M, state.mask, aux.V, p.features, state.H, dlogits);
}

inline void require_converged(const FixedPointTrace& t, const char* what) {
  if (!t.converged) {
    throw ConvergenceError(std::string(what) + ": no convergence after " + std::to_string(t.iterations) +
                           " iterations (residual " + std::to_string(t.residual) + ")");
  }
}

struct RecFull {
  RecState state;
  RecAux aux;
  DenseMatrix dlogits;
  GradSet grads;
  double loss = 0.0;
};

/// Exact full-graph loss and implicit gradient.
inline RecFull rec_full_gradients(const Problem& p, const RecParams& params, const SolverOptions& opts,
                                  const DenseMatrix* h_init = nullptr, const DenseMatrix* v_init = nullptr) {
  if (p.labels.train.count == 0) throw ConfigError("rec_full_gradients: no labelled nodes");
  RecFull f;
  f.state = solve_forward(p, params, opts, h_init);
  require_converged(f.state.trace, "rec forward solve");
  std::vector<NodeId> all(p.n());
  for (NodeId v = 0; v < all.size(); ++v) all[v] = v;
  auto pb = output_pullback(matmul(f.state.H, params.out), labeled_rows(p.labels, all), p.labels.train.count);
  f.loss = pb.loss;
  f.dlogits = std::move(pb.dlogits);
  const DenseMatrix dH = matmul_nt(f.dlogits, params.out);
  f.aux = solve_backward(p.full, f.state, dH, params, opts, v_init);
  require_converged(f.aux.trace, "rec backward solve");
  f.grads = rec_grads(p, f.state, f.aux, f.dlogits);
  return f;
}

inline void sgd_update(RecParams& params, const GradSet& g, double lr) {
  auto refs = params.block_refs();
  if (refs.size() != g.blocks.size()) throw ShapeError("sgd_update: block count mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) axpy(-lr, g.blocks[i], *refs[i]);
  params.W = project_wellposed(params.W, params.kappa);
}

/// Full-batch gradient descent on the equilibrium model.
inline StepReport rec_gd_step(const Problem& p, RecParams& params, double lr, const SolverOptions& opts) {
  auto f = rec_full_gradients(p, params, opts);
  StepReport r;
  r.loss = f.loss;
  r.grad_norm = f.grads.norm();
  r.fwd_iters = f.state.trace.iterations;
  r.bwd_iters = f.aux.trace.iterations;
  sgd_update(params, f.grads, lr);
  return r;
}

}  // namespace lmc
