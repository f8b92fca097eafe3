#pragma once

// Oracles and error tracking: central finite differences, exhaustive batch
// enumeration, relative-error traces and their CSV form.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lmc/conv_gnn.hpp"
#include "lmc/dense.hpp"
#include "lmc/errors.hpp"
#include "lmc/problem.hpp"
#include "lmc/rec_gnn.hpp"
#include "lmc/sampling.hpp"

namespace lmc {

/// Central differences of `f` with respect to every entry of `x`. `f` reads
/// `x` by reference; `x` is restored entry by entry.
template <typename F>
DenseMatrix finite_diff(F&& f, DenseMatrix& x, double eps = 1e-5) {
  if (!(eps > 0.0)) throw ConfigError("finite_diff: eps must be positive");
  DenseMatrix g(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x.values()[k];
    x.values()[k] = saved + eps;
    const double fp = f();
    x.values()[k] = saved - eps;
    const double fm = f();
    x.values()[k] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("finite_diff: non-finite evaluation");
    g.values()[k] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

/// Elementwise relative error |a - b| / max(|a|, |b|, floor), maximised.
inline double max_elementwise_rel_err(const DenseMatrix& a, const DenseMatrix& b, double floor = 1e-8) {
  if (!a.same_shape(b)) throw ShapeError("max_elementwise_rel_err: shape mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = std::abs(a.values()[k] - b.values()[k]);
    worst = std::max(worst, d / std::max({std::abs(a.values()[k]), std::abs(b.values()[k]), floor}));
  }
  return worst;
}

/// Smallest |Z| over all pre-activations; finite differences straddling a
/// ReLU kink are unreliable below ~eps.
inline double min_abs_preactivation(const ForwardCache& c) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t l = 1; l < c.Z.size(); ++l)
    for (double v : c.Z[l].values()) m = std::min(m, std::abs(v));
  return m;
}

inline double min_abs_preactivation(const RecState& s) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : s.Z.values()) m = std::min(m, std::abs(v));
  return m;
}

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

constexpr double kMaxEnumeratedBatches = 1e5;

/// Visits every c-subset of the B parts in lexicographic order.
template <typename Visit>
std::size_t for_each_batch(std::size_t B, std::size_t c, Visit&& visit) {
  if (c < 1 || c > B) throw ConfigError("enumerate: need 1 <= c <= B");
  if (binomial(B, c) > kMaxEnumeratedBatches) {
    throw ConfigError("enumerate: C(" + std::to_string(B) + "," + std::to_string(c) + ") exceeds 1e5 batches");
  }
  std::vector<std::uint32_t> idx(c);
  for (std::size_t i = 0; i < c; ++i) idx[i] = static_cast<std::uint32_t>(i);
  std::size_t count = 0;
  while (true) {
    visit(idx);
    ++count;
    std::size_t i = c;
    while (i > 0 && idx[i - 1] == B - c + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < c; ++j) idx[j] = idx[j - 1] + 1;
  }
  return count;
}

struct EnumerationResult {
  GradSet mean;
  std::size_t num_batches = 0;
};

/// Uniform average of grad_fn over all C(B, c) batches.
template <typename GradFn>
EnumerationResult enumerate_batches(const Partition& partition, std::size_t c, GradFn&& grad_fn) {
  EnumerationResult r;
  bool first = true;
  r.num_batches = for_each_batch(partition.num_parts, c, [&](const std::vector<std::uint32_t>& parts) {
    GradSet g = grad_fn(parts);
    if (first) {
      r.mean = g.zeros_like();
      first = false;
    }
    r.mean.add_scaled(1.0, g);
  });
  for (auto& b : r.mean.blocks) scale(b, 1.0 / static_cast<double>(r.num_batches));
  return r;
}

inline double max_abs_diff_per_block(const GradSet& a, const GradSet& b, std::vector<double>* per_block = nullptr) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const double d = max_abs_diff(a.blocks[i], b.blocks[i]);
    if (per_block != nullptr) per_block->push_back(d);
    worst = std::max(worst, d);
  }
  return worst;
}

/// One row of an error trace.
struct ErrorRow {
  std::size_t step = 0;
  double loss = 0.0;
  double grad_rel_err = 0.0;
  double d_h = 0.0;
  double d_v = 0.0;
  std::size_t touched_rows = 0;
  double wall_ms = 0.0;

  friend bool operator==(const ErrorRow&, const ErrorRow&) = default;
};

struct ErrorTrace {
  std::vector<ErrorRow> rows;
  std::vector<std::vector<double>> block_rel_err;  // per step, per parameter block

  double mean_grad_rel_err() const {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.grad_rel_err;
    return s / static_cast<double>(rows.size());
  }
};

inline const char* kErrorTraceHeader = "step,loss,grad_rel_err,d_h,d_v,touched_rows,wall_ms";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string serialize_trace(const ErrorTrace& t) {
  std::string out = std::string(kErrorTraceHeader) + "\n";
  for (const auto& r : t.rows) {
    out += std::to_string(r.step) + "," + format_double(r.loss) + "," + format_double(r.grad_rel_err) + "," +
           format_double(r.d_h) + "," + format_double(r.d_v) + "," + std::to_string(r.touched_rows) + "," +
           format_double(r.wall_ms) + "\n";
  }
  return out;
}

inline double parse_double_field(const std::string& s, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw ConfigError("error trace: bad " + what + " '" + s + "'");
  return v;
}

inline std::size_t parse_size_field(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("error trace: bad " + what + " '" + s + "'");
  }
  if (pos != s.size() || s.empty() || s[0] == '-') throw ConfigError("error trace: bad " + what + " '" + s + "'");
  return static_cast<std::size_t>(v);
}

inline ErrorTrace parse_trace(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kErrorTraceHeader) throw ConfigError("error trace: missing header");
  ErrorTrace t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw ConfigError("error trace: expected 7 fields, got " + std::to_string(f.size()));
    ErrorRow r;
    r.step = parse_size_field(f[0], "step");
    r.loss = parse_double_field(f[1], "loss");
    r.grad_rel_err = parse_double_field(f[2], "grad_rel_err");
    r.d_h = parse_double_field(f[3], "d_h");
    r.d_v = parse_double_field(f[4], "d_v");
    r.touched_rows = parse_size_field(f[5], "touched_rows");
    r.wall_ms = parse_double_field(f[6], "wall_ms");
    t.rows.push_back(r);
  }
  return t;
}

inline void write_trace(const ErrorTrace& t, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << serialize_trace(t);
}

inline ErrorTrace read_trace(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_trace(ss.str());
}

/// Appends a row comparing a candidate gradient against a reference computed
/// at the same parameters.
inline ErrorRow track_errors(ErrorTrace& trace, const StepReport& report, const GradSet& candidate,
                             const GradSet& reference, double d_h, double d_v, double wall_ms = 0.0) {
  ErrorRow r;
  r.step = report.step;
  r.loss = report.loss;
  r.grad_rel_err = rel_err(candidate, reference);
  r.d_h = d_h;
  r.d_v = d_v;
  r.touched_rows = report.touched_rows;
  r.wall_ms = wall_ms;
  std::vector<double> per_block;
  for (std::size_t i = 0; i < candidate.blocks.size(); ++i) {
    per_block.push_back(rel_err(GradSet{{candidate.blocks[i]}}, GradSet{{reference.blocks[i]}}));
  }
  trace.rows.push_back(r);
  trace.block_rel_err.push_back(std::move(per_block));
  return r;
}

}  // namespace lmc
