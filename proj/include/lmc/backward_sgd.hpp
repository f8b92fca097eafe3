#pragma once

// Backward SGD: the mini-batch gradient formed from exact embeddings and
// auxiliary variables restricted to the batch core. Unbiased for uniformly
// sampled clusters; used as a reference for the approximate methods.

#include "lmc/conv_gnn.hpp"
#include "lmc/dense.hpp"
#include "lmc/problem.hpp"
#include "lmc/rec_gnn.hpp"
#include "lmc/sampling.hpp"

namespace lmc {

/// (B/c) sum over core rows of the per-node gradient contributions.
inline GradSet backward_sgd_grads(const MiniBatch& b, const ForwardCache& cache, const ConvGrads& exact) {
  const std::size_t L = cache.H.size() - 1;
  if (exact.V.size() != L + 1) throw ShapeError("backward_sgd: cache/aux layer mismatch");
  if (exact.dlogits.rows() != cache.H[L].rows()) throw ShapeError("backward_sgd: missing dlogits");
  GradSet g;
  g.blocks.resize(L + 1);
  for (std::size_t l = 1; l <= L; ++l) {
    const DenseMatrix G = relu_backward(gather_rows(cache.mask[l], b.core), gather_rows(exact.V[l], b.core));
    g.blocks[l - 1] = scale_copy(matmul_tn(gather_rows(cache.M[l], b.core), G), b.scale());
  }
  g.blocks[L] = scale_copy(matmul_tn(gather_rows(cache.H[L], b.core), gather_rows(exact.dlogits, b.core)), b.scale());
  return g;
}

inline GradSet backward_sgd_grads(const MiniBatch& b, const Problem& p, const RecFull& exact) {
  GradSet g = rec_grads(gather_rows(exact.state.M, b.core), gather_rows(exact.state.mask, b.core),
                        gather_rows(exact.aux.V, b.core), gather_rows(p.features, b.core),
                        gather_rows(exact.state.H, b.core), gather_rows(exact.dlogits, b.core));
  for (auto& blk : g.blocks) scale(blk, b.scale());
  return g;
}

}  // namespace lmc
