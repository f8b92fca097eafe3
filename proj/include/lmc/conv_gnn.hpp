#pragma once

// Full-batch L-layer GCN, H^l = relu((A_hat H^{l-1}) W^l), logits = H^L W_out,
// with the backward pass written as message passing over auxiliary variables
// V^l = dL/dH^l.

#include <random>
#include <vector>

#include "lmc/aggregate.hpp"
#include "lmc/dense.hpp"
#include "lmc/problem.hpp"

namespace lmc {

struct ConvParams {
  std::vector<DenseMatrix> weights;  // W^1..W^L, weights[l-1] is d_{l-1} x d_l
  DenseMatrix out;                   // d_L x K

  std::size_t num_layers() const { return weights.size(); }
  const DenseMatrix& layer(std::size_t l) const { return weights[l - 1]; }

  GradSet as_blocks() const {
    GradSet g{weights};
    g.blocks.push_back(out);
    return g;
  }
  void set_blocks(const GradSet& g) {
    if (g.blocks.size() != weights.size() + 1) throw ShapeError("ConvParams: block count mismatch");
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = g.blocks[i];
    out = g.blocks.back();
  }
  std::vector<DenseMatrix*> block_refs() {
    std::vector<DenseMatrix*> r;
    for (auto& w : weights) r.push_back(&w);
    r.push_back(&out);
    return r;
  }
};

/// Glorot-uniform initialisation. `dims` = {d_0 = d_x, d_1, ..., d_L}.
inline DenseMatrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = u(rng);
  return m;
}

inline ConvParams init_conv_params(const std::vector<std::size_t>& dims, std::size_t num_classes,
                                   std::uint64_t seed) {
  if (dims.size() < 2) throw ConfigError("init_conv_params: need at least one layer");
  Rng rng(seed);
  ConvParams p;
  for (std::size_t l = 1; l < dims.size(); ++l) p.weights.push_back(glorot(dims[l - 1], dims[l], rng));
  p.out = glorot(dims.back(), num_classes, rng);
  return p;
}

struct ForwardCache {
  std::vector<DenseMatrix> H;     // H[0] = X, H[l] = relu(Z[l])
  std::vector<DenseMatrix> M;     // M[l] = A_hat H[l-1]   (M[0] unused)
  std::vector<DenseMatrix> Z;     // Z[l] = M[l] W^l       (Z[0] unused)
  std::vector<DenseMatrix> mask;  // relu'(Z[l])           (mask[0] unused)
  DenseMatrix logits;
};

struct ConvGrads {
  GradSet grads;               // dW^1..dW^L, dW_out
  std::vector<DenseMatrix> V;  // V[l] = dL/dH^l for l = 1..L (V[0] unused)
  DenseMatrix dlogits;
  double loss = 0.0;
};

inline ForwardCache forward_full(const LocalAdjView& view, const DenseMatrix& x, const ConvParams& params,
                                 OpCounter* counter = nullptr) {
  const std::size_t L = params.num_layers();
  ForwardCache c;
  c.H.reserve(L + 1);
  c.H.push_back(x);
  c.M.emplace_back();
  c.Z.emplace_back();
  c.mask.emplace_back();
  for (std::size_t l = 1; l <= L; ++l) {
    c.M.push_back(aggregate(view, c.H[l - 1], nullptr, Pruned::Reject, counter));
    c.Z.push_back(matmul(c.M[l], params.layer(l)));
    auto r = relu(c.Z[l]);
    c.H.push_back(std::move(r.activation));
    c.mask.push_back(std::move(r.mask));
    if (counter != nullptr) counter->touched_rows += c.H[l].rows();
  }
  c.logits = matmul(c.H[L], params.out);
  check_finite(c.logits, "forward_full logits");
  return c;
}

inline ForwardCache forward_full(const Problem& p, const ConvParams& params) {
  return forward_full(p.full, p.features, params);
}

/// Reverse pass from a given output pullback.
///
/// V^L = dlogits W_out^T, V^{l-1} = A_hat (relu'(Z^l) . V^l) (W^l)^T and
/// dW^l = (A_hat H^{l-1})^T (relu'(Z^l) . V^l).
inline ConvGrads backward_from_dlogits(const LocalAdjView& view, const ForwardCache& cache,
                                       const DenseMatrix& dlogits, const ConvParams& params,
                                       OpCounter* counter = nullptr) {
  const std::size_t L = params.num_layers();
  if (cache.H.size() != L + 1) throw ShapeError("backward: cache/params layer mismatch");
  ConvGrads g;
  g.V.resize(L + 1);
  g.grads.blocks.resize(L + 1);
  g.grads.blocks[L] = matmul_tn(cache.H[L], dlogits);
  g.V[L] = matmul_nt(dlogits, params.out);
  for (std::size_t l = L; l >= 1; --l) {
    const DenseMatrix G = relu_backward(cache.mask[l], g.V[l]);
    g.grads.blocks[l - 1] = matmul_tn(cache.M[l], G);
    if (l > 1) {
      const DenseMatrix U = matmul_nt(G, params.layer(l));
      g.V[l - 1] = aggregate(view, U, nullptr, Pruned::Reject, counter);
    }
  }
  return g;
}

inline double loss_full(const ForwardCache& cache, const Labels& labels) {
  if (labels.train.count == 0) throw ConfigError("loss_full: no labelled nodes");
  std::vector<NodeId> all(cache.logits.rows());
  for (NodeId v = 0; v < all.size(); ++v) all[v] = v;
  return output_pullback(cache.logits, labeled_rows(labels, all), labels.train.count).loss;
}

/// Exact gradient of the mean cross-entropy over V_L.
inline ConvGrads backward_full(const Problem& p, const ForwardCache& cache, const ConvParams& params) {
  if (p.labels.train.count == 0) throw ConfigError("backward_full: no labelled nodes");
  std::vector<NodeId> all(p.n());
  for (NodeId v = 0; v < all.size(); ++v) all[v] = v;
  auto pb = output_pullback(cache.logits, labeled_rows(p.labels, all), p.labels.train.count);
  auto g = backward_from_dlogits(p.full, cache, pb.dlogits, params);
  g.loss = pb.loss;
  g.dlogits = std::move(pb.dlogits);
  return g;
}

inline void sgd_update(ConvParams& params, const GradSet& g, double lr) {
  auto refs = params.block_refs();
  if (refs.size() != g.blocks.size()) throw ShapeError("sgd_update: block count mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) axpy(-lr, g.blocks[i], *refs[i]);
}

/// One full-batch gradient descent step.
inline StepReport gd_step(const Problem& p, ConvParams& params, double lr, OpCounter* counter = nullptr) {
  auto cache = forward_full(p.full, p.features, params, counter);
  auto g = backward_full(p, cache, params);
  StepReport r;
  r.loss = g.loss;
  r.grad_norm = g.grads.norm();
  sgd_update(params, g.grads, lr);
  if (counter != nullptr) r.touched_rows = counter->touched_rows;
  return r;
}

}  // namespace lmc
