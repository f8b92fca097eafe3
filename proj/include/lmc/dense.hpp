#pragma once

// Dense row-major matrices and the handful of kernels the GNN models need.
// Everything is node-major: one row per node, one column per feature.
// Reductions run in a fixed left-to-right order so identical inputs give
// bit-identical outputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lmc/errors.hpp"

namespace lmc {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  DenseMatrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ == 0 ? 0 : init.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
      if (r.size() != cols_) throw ShapeError("DenseMatrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const DenseMatrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  // Exact element equality (so +0 == -0); used by the bitwise identity checks.
  friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_str(const DenseMatrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

// Row-parallel execution. Every kernel that uses it writes disjoint rows and
// reduces within a row sequentially, so results do not depend on the thread
// count. Defaults to one thread.
namespace detail {
inline int& thread_count() {
  static int count = 1;
  return count;
}
}  // namespace detail

inline void set_num_threads(int n) { detail::thread_count() = std::max(1, n); }
inline int num_threads() { return detail::thread_count(); }

template <typename Fn>
void parallel_rows(std::size_t n, Fn&& fn) {
  const int threads = num_threads();
  if (threads <= 1 || n < 512) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline void check_finite(const DenseMatrix& m, const char* what) {
  for (double v : m.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
  }
}

/// C = A * B
inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
  }
  DenseMatrix c(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  parallel_rows(a.rows(), [&](std::size_t i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
    }
  });
  return c;
}

/// C = A^T * B, summing over rows of A and B in index order.
inline DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: " + shape_str(a) + "^T * " + shape_str(b));
  }
  DenseMatrix c(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto arow = a.row(r);
    auto brow = b.row(r);
    for (std::size_t i = 0; i < arow.size(); ++i) {
      const double ai = arow[i];
      if (ai == 0.0) continue;
      auto out = c.row(i);
      for (std::size_t j = 0; j < brow.size(); ++j) out[j] += ai * brow[j];
    }
  }
  return c;
}

/// C = A * B^T
inline DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a) + " * " + shape_str(b) + "^T");
  }
  DenseMatrix c(a.rows(), b.rows());
  parallel_rows(a.rows(), [&](std::size_t i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto brow = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < arow.size(); ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  });
  return c;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// y += alpha * x
inline void axpy(double alpha, const DenseMatrix& x, DenseMatrix& y) {
  if (!x.same_shape(y)) throw ShapeError("axpy: " + shape_str(x) + " vs " + shape_str(y));
  auto xs = x.values();
  auto ys = y.values();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += alpha * xs[i];
}

inline DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix c = a;
  axpy(1.0, b, c);
  return c;
}

inline DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix c = a;
  axpy(-1.0, b, c);
  return c;
}

inline void scale(DenseMatrix& m, double s) {
  for (double& v : m.values()) v *= s;
}

inline DenseMatrix scale_copy(DenseMatrix m, double s) {
  scale(m, s);
  return m;
}

inline DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ShapeError("hadamard: " + shape_str(a) + " vs " + shape_str(b));
  DenseMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < c.size(); ++i) c.values()[i] = a.values()[i] * b.values()[i];
  return c;
}

/// Adds a 1 x cols row vector to every row.
inline void add_row_broadcast(DenseMatrix& m, const DenseMatrix& row) {
  if (row.rows() != 1 || row.cols() != m.cols()) {
    throw ShapeError("add_row_broadcast: " + shape_str(row) + " onto " + shape_str(m));
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += row(0, j);
  }
}

inline DenseMatrix column_sums(const DenseMatrix& m) {
  DenseMatrix s(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s(0, j) += m(i, j);
  return s;
}

inline DenseMatrix gather_rows(const DenseMatrix& m, std::span<const std::uint32_t> ids) {
  DenseMatrix out(ids.size(), m.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto src = m.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

template <typename Index>
DenseMatrix gather_rows(const DenseMatrix& m, const std::vector<Index>& ids) {
  DenseMatrix out(ids.size(), m.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto src = m.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

template <typename Index>
void scatter_rows(const DenseMatrix& src, const std::vector<Index>& ids, DenseMatrix& dst) {
  if (src.rows() != ids.size() || src.cols() != dst.cols()) {
    throw ShapeError("scatter_rows: " + shape_str(src) + " into " + shape_str(dst));
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto s = src.row(i);
    std::copy(s.begin(), s.end(), dst.row(static_cast<std::size_t>(ids[i])).begin());
  }
}

/// Copies rows [offset, offset + block.rows()) of `dst` from `block`.
inline void set_row_block(DenseMatrix& dst, std::size_t offset, const DenseMatrix& block) {
  if (block.cols() != dst.cols() || offset + block.rows() > dst.rows()) {
    throw ShapeError("set_row_block: " + shape_str(block) + " into " + shape_str(dst));
  }
  std::copy(block.values().begin(), block.values().end(), dst.row(offset).begin());
}

inline DenseMatrix row_block(const DenseMatrix& m, std::size_t offset, std::size_t count) {
  DenseMatrix out(count, m.cols());
  if (count > 0) {
    auto first = m.row(offset).begin();
    std::copy(first, first + count * m.cols(), out.values().begin());
  }
  return out;
}

struct ReluResult {
  DenseMatrix activation;
  DenseMatrix mask;
};

/// H = max(Z, 0) with mask 1 where Z > 0. The subgradient at 0 is taken as 0.
inline ReluResult relu(const DenseMatrix& z) {
  ReluResult r{DenseMatrix(z.rows(), z.cols()), DenseMatrix(z.rows(), z.cols())};
  auto zs = z.values();
  auto hs = r.activation.values();
  auto ms = r.mask.values();
  for (std::size_t i = 0; i < zs.size(); ++i) {
    if (zs[i] > 0.0) {
      hs[i] = zs[i];
      ms[i] = 1.0;
    }
  }
  return r;
}

inline DenseMatrix relu_mask(const DenseMatrix& z) {
  DenseMatrix m(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.size(); ++i) m.values()[i] = z.values()[i] > 0.0 ? 1.0 : 0.0;
  return m;
}

inline DenseMatrix relu_backward(const DenseMatrix& mask, const DenseMatrix& v) {
  return hadamard(mask, v);
}

struct XentResult {
  double loss = 0.0;
  DenseMatrix dlogits;
};

/// Weighted mean softmax cross-entropy over the rows of `logits`.
///
/// loss = weight * mean_i CE(logits_i, labels_i); the gradient is
/// weight * (softmax - onehot) / rows. Rows are stabilised by subtracting
/// their maximum before exponentiation; log-sum-exp goes through log1p.
inline XentResult softmax_xent(const DenseMatrix& logits, std::span<const int> labels,
                               double weight) {
  if (logits.rows() == 0) throw ConfigError("softmax_xent: empty label set");
  if (labels.size() != logits.rows()) throw ShapeError("softmax_xent: label count mismatch");
  const std::size_t k = logits.cols();
  const double rows = static_cast<double>(logits.rows());
  XentResult out{0.0, DenseMatrix(logits.rows(), k)};
  double total = 0.0;
  std::vector<double> p(k);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw ConfigError("softmax_xent: label out of range");
    auto z = logits.row(i);
    const auto top = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    const double zmax = z[top];
    double rest = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(z[j] - zmax);
      if (j != top) rest += p[j];
    }
    const double sum = 1.0 + rest;
    total += std::log1p(rest) - (z[y] - zmax);
    auto g = out.dlogits.row(i);
    for (std::size_t j = 0; j < k; ++j) {
      const double onehot = static_cast<int>(j) == y ? 1.0 : 0.0;
      g[j] = weight * (p[j] / sum - onehot) / rows;
    }
  }
  out.loss = weight * total / rows;
  return out;
}

inline double fro_norm(const DenseMatrix& m) {
  double s = 0.0;
  for (double v : m.values()) s += v * v;
  return std::sqrt(s);
}

/// Largest absolute row sum.
inline double inf_norm_rows(const DenseMatrix& m) {
  double best = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (double v : m.row(i)) s += std::abs(v);
    best = std::max(best, s);
  }
  return best;
}

/// Largest absolute column sum, i.e. inf_norm_rows of the transpose.
inline double inf_norm_cols(const DenseMatrix& m) {
  std::vector<double> sums(m.cols(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) sums[j] += std::abs(m(i, j));
  return sums.empty() ? 0.0 : *std::max_element(sums.begin(), sums.end());
}

/// ||a - b||_F / ||b||_F. Zero when both vanish, +inf when only b does.
inline double rel_err(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ShapeError("rel_err: " + shape_str(a) + " vs " + shape_str(b));
  const double diff = fro_norm(subtract(a, b));
  const double base = fro_norm(b);
  if (base == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / base;
}

inline double max_abs(const DenseMatrix& m) {
  double best = 0.0;
  for (double v : m.values()) best = std::max(best, std::abs(v));
  return best;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: " + shape_str(a) + " vs " + shape_str(b));
  double best = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    best = std::max(best, std::abs(a.values()[i] - b.values()[i]));
  return best;
}

}  // namespace lmc
