#pragma once

// Independent reference implementations for the unit tests: dense matrices
// built entry by entry, naive products, a Jacobi eigen solver and Gaussian
// elimination. None of these share code with the library kernels.

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "lmc/dense.hpp"
#include "lmc/graph.hpp"

namespace oracle {

using lmc::DenseMatrix;

inline DenseMatrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  DenseMatrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

inline DenseMatrix naive_matmul(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0.0L;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

inline DenseMatrix naive_transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// Degrees counted from an explicit edge list, independent of the CSR build.
inline DenseMatrix dense_normalized_adjacency(const std::vector<lmc::Edge>& edges, std::size_t n) {
  DenseMatrix a(n, n);
  for (const auto& [u, v] : edges)
    if (u != v) a(u, v) = a(v, u) = 1.0;
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a(i, j);
  for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (a(i, j) != 0.0) a(i, j) = 1.0 / std::sqrt((deg[i] + 1.0) * (deg[j] + 1.0));
  return a;
}

inline DenseMatrix dense_from_graph(const lmc::Graph& g) {
  std::vector<lmc::Edge> edges;
  for (lmc::NodeId v = 0; v < g.n; ++v)
    for (lmc::NodeId u : g.neighbors_of(v))
      if (v < u) edges.emplace_back(v, u);
  return dense_normalized_adjacency(edges, g.n);
}

inline DenseMatrix naive_relu(const DenseMatrix& z) {
  DenseMatrix h(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) h(i, j) = z(i, j) > 0.0 ? z(i, j) : 0.0;
  return h;
}

inline DenseMatrix naive_mask(const DenseMatrix& z) {
  DenseMatrix h(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) h(i, j) = z(i, j) > 0.0 ? 1.0 : 0.0;
  return h;
}

// Cyclic Jacobi rotations; eigenvalues of a symmetric matrix, unsorted.
inline std::vector<double> symmetric_eigenvalues(DenseMatrix a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  return ev;
}

// Solves A x = b by Gaussian elimination with partial pivoting.
inline std::vector<double> solve_linear(DenseMatrix a, std::vector<double> b) {
  const std::size_t n = a.rows();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    for (std::size_t k = 0; k < n; ++k) std::swap(a(col, k), a(piv, k));
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      for (std::size_t k = col; k < n; ++k) a(r, k) -= f * a(col, k);
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a(i, k) * x[k];
    x[i] = s / a(i, i);
  }
  return x;
}

inline std::vector<lmc::Edge> path_edges(std::size_t n) {
  std::vector<lmc::Edge> e;
  for (lmc::NodeId v = 0; v + 1 < n; ++v) e.emplace_back(v, v + 1);
  return e;
}

inline std::vector<lmc::Edge> random_edges(std::size_t n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<lmc::Edge> e;
  for (lmc::NodeId a = 0; a < n; ++a)
    for (lmc::NodeId b = a + 1; b < n; ++b)
      if (u(rng) < p) e.emplace_back(a, b);
  return e;
}

}  // namespace oracle
