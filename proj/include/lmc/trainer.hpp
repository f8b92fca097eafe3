#pragma once

// Run configuration and the training / diagnostic / oracle drivers shared by
// the command-line tool and the tests.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lmc/backward_sgd.hpp"
#include "lmc/conv_gnn.hpp"
#include "lmc/dataset.hpp"
#include "lmc/diagnostics.hpp"
#include "lmc/history.hpp"
#include "lmc/io.hpp"
#include "lmc/lmc_conv.hpp"
#include "lmc/lmc_rec.hpp"
#include "lmc/rec_gnn.hpp"
#include "lmc/sampling.hpp"

namespace lmc {

struct RunConfig {
  std::string method = "lmc-conv";
  std::string model = "gcn";
  std::size_t layers = 2;
  std::size_t hidden = 16;
  std::vector<std::size_t> dims;  // hidden widths d_1..d_L; overrides layers/hidden when set
  double lr = 0.1;
  std::size_t epochs = 10;
  std::optional<std::size_t> steps;
  std::size_t parts = 8;  // B
  std::size_t batch = 2;  // c
  std::string partition = "clustered";
  std::uint64_t seed = 0;
  std::optional<double> beta_alpha;
  std::optional<std::string> beta_score;
  double tol = 1e-8;
  int max_iter = 500;
  double kappa = 0.95;
  std::string data;
  std::string out = "out";
  std::size_t diag_every = 0;  // 0: one diagnostic row per epoch
  std::string sampling = "epoch";
  bool timing = false;
  std::size_t nodes = 0;        // oracle instance size (0: command default)
  std::optional<double> threshold;

  std::vector<std::size_t> hidden_dims() const {
    if (!dims.empty()) return dims;
    return std::vector<std::size_t>(layers, hidden);
  }
  SolverOptions solver() const { return {tol, max_iter}; }
  ModelKind model_kind() const { return parse_model(model); }
};

inline const std::set<std::string>& known_methods() {
  static const std::set<std::string> m{"gd", "backward-sgd", "lmc-conv", "lmc-rec", "gas-conv", "gas-rec", "cluster"};
  return m;
}

namespace detail {

inline std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long r = 0;
  try {
    r = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  if (pos != v.size() || v.empty() || v[0] == '-') {
    throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  return static_cast<std::size_t>(r);
}

inline double to_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double r = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(r)) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
  return r;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config: " + key + " expects a boolean, got '" + v + "'");
}

}  // namespace detail

/// Applies key/value settings; unknown keys are rejected.
inline void apply_settings(RunConfig& c, const std::map<std::string, std::string>& kv) {
  using namespace detail;
  for (const auto& [k, v] : kv) {
    if (k == "method") c.method = v;
    else if (k == "model") c.model = v;
    else if (k == "layers" || k == "L") c.layers = to_size(k, v);
    else if (k == "hidden") c.hidden = to_size(k, v);
    else if (k == "dims") {
      c.dims.clear();
      std::stringstream ss(v);
      std::string cell;
      while (std::getline(ss, cell, ',')) c.dims.push_back(to_size(k, cell));
    } else if (k == "lr") c.lr = to_real(k, v);
    else if (k == "epochs") c.epochs = to_size(k, v);
    else if (k == "steps") c.steps = to_size(k, v);
    else if (k == "parts" || k == "B") c.parts = to_size(k, v);
    else if (k == "batch" || k == "c") c.batch = to_size(k, v);
    else if (k == "partition") c.partition = v;
    else if (k == "seed") c.seed = to_size(k, v);
    else if (k == "beta_alpha" || k == "alpha") c.beta_alpha = to_real(k, v);
    else if (k == "beta_score") c.beta_score = v;
    else if (k == "tol") c.tol = to_real(k, v);
    else if (k == "max_iter") c.max_iter = static_cast<int>(to_size(k, v));
    else if (k == "kappa") c.kappa = to_real(k, v);
    else if (k == "data") c.data = v;
    else if (k == "out") c.out = v;
    else if (k == "diag_every") c.diag_every = to_size(k, v);
    else if (k == "sampling") c.sampling = v;
    else if (k == "timing") c.timing = to_bool(k, v);
    else if (k == "nodes") c.nodes = to_size(k, v);
    else if (k == "threshold") c.threshold = to_real(k, v);
    else throw ConfigError("config: unknown key '" + k + "'");
  }
}

inline void validate(const RunConfig& c, bool allow_zero_lr = false) {
  if (!known_methods().count(c.method)) throw ConfigError("unknown method '" + c.method + "'");
  const ModelKind m = c.model_kind();
  if ((c.method == "lmc-conv" || c.method == "gas-conv") && m != ModelKind::Gcn) {
    throw ConfigError("method " + c.method + " requires model gcn");
  }
  if ((c.method == "lmc-rec" || c.method == "gas-rec") && m != ModelKind::RecGcn) {
    throw ConfigError("method " + c.method + " requires model recgcn");
  }
  if (allow_zero_lr ? !(c.lr >= 0.0) : !(c.lr > 0.0)) throw ConfigError("lr must be positive");
  if (c.batch < 1 || c.parts < c.batch) throw ConfigError("need B >= c >= 1");
  if (c.partition != "clustered" && c.partition != "random") {
    throw ConfigError("partition must be clustered or random");
  }
  if (c.sampling != "epoch" && c.sampling != "iid") throw ConfigError("sampling must be epoch or iid");
  if (m == ModelKind::Gcn) {
    for (std::size_t d : c.hidden_dims())
      if (d == 0) throw ConfigError("hidden widths must be positive");
    if (c.hidden_dims().empty()) throw ConfigError("need at least one layer");
  } else {
    if (c.hidden == 0) throw ConfigError("hidden width must be positive");
    if (!(c.kappa > 0.0 && c.kappa < 1.0)) throw ConfigError("kappa must lie in (0, 1)");
    if (!(c.tol > 0.0) || c.max_iter < 1) throw ConfigError("solver needs tol > 0 and max_iter >= 1");
  }
  if (c.beta_alpha && !(*c.beta_alpha >= 0.0 && *c.beta_alpha <= 1.0)) {
    throw ConfigError("beta_alpha must lie in [0, 1]");
  }
  if (c.beta_score) parse_beta_score(*c.beta_score);
}

inline Partition make_partition(const RunConfig& c, const Graph& g) {
  return c.partition == "random" ? partition_random(g, c.parts, c.seed) : partition_clustered(g, c.parts, c.seed);
}

inline BetaSchedule beta_schedule(const RunConfig& c, std::size_t batch_parts) {
  BetaSchedule s = BetaSchedule::defaults_for(batch_parts, c.parts);
  if (c.beta_alpha) s.alpha = *c.beta_alpha;
  if (c.beta_score) s.score = parse_beta_score(*c.beta_score);
  return s;
}

/// Parameters and histories of either model.
struct ModelState {
  ModelKind kind = ModelKind::Gcn;
  ConvParams conv;
  RecParams rec;
  HistoryConv hconv;
  HistoryRec hrec;
};

inline ModelState init_model(const RunConfig& c, const Problem& p) {
  ModelState s;
  s.kind = c.model_kind();
  const auto K = static_cast<std::size_t>(p.labels.num_classes);
  if (s.kind == ModelKind::Gcn) {
    std::vector<std::size_t> dims{p.feature_dim()};
    for (std::size_t d : c.hidden_dims()) dims.push_back(d);
    s.conv = init_conv_params(dims, K, c.seed);
    s.hconv = HistoryConv::init(p, s.conv);
  } else {
    s.rec = init_rec_params(p.feature_dim(), c.hidden, K, c.kappa, c.seed);
    s.hrec = HistoryRec::init(p, s.rec);
  }
  return s;
}

inline GradSet param_blocks(const ModelState& s) {
  return s.kind == ModelKind::Gcn ? s.conv.as_blocks() : s.rec.as_blocks();
}

/// Exact full-graph quantities at the current parameters.
struct Evaluation {
  double loss = 0.0;
  GradSet grads;
  DenseMatrix logits;
  ForwardCache cache;  // gcn
  ConvGrads conv;      // gcn
  RecFull rec;         // recgcn
};

inline Evaluation evaluate(const Problem& p, const ModelState& s, const SolverOptions& solver,
                           const Evaluation* warm = nullptr) {
  Evaluation e;
  if (s.kind == ModelKind::Gcn) {
    e.cache = forward_full(p, s.conv);
    e.conv = backward_full(p, e.cache, s.conv);
    e.loss = e.conv.loss;
    e.grads = e.conv.grads;
    e.logits = e.cache.logits;
  } else {
    const bool use_warm = warm != nullptr && warm->rec.state.H.rows() == p.n();
    e.rec = rec_full_gradients(p, s.rec, solver, use_warm ? &warm->rec.state.H : nullptr,
                               use_warm ? &warm->rec.aux.V : nullptr);
    e.loss = e.rec.loss;
    e.grads = e.rec.grads;
    e.logits = matmul(e.rec.state.H, s.rec.out);
  }
  if (!std::isfinite(e.loss)) throw NumericError("non-finite loss");
  return e;
}

inline double accuracy(const DenseMatrix& logits, const std::vector<int>& classes, const LabeledSet& mask) {
  std::size_t total = 0, correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!mask.contains(static_cast<NodeId>(i))) continue;
    std::size_t best = 0;
    for (std::size_t k = 1; k < logits.cols(); ++k)
      if (logits(i, k) > logits(i, best)) best = k;
    ++total;
    if (static_cast<int>(best) == classes[i]) ++correct;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

/// Hands out batches: each epoch visits every cluster once in shuffled
/// groups of c (the last group may be smaller), or draws c clusters i.i.d.
/// per step.
class BatchScheduler {
 public:
  BatchScheduler(std::size_t B, std::size_t c, bool iid, std::uint64_t seed)
      : B_(B), c_(c), iid_(iid), rng_(seed ^ 0x9e3779b97f4a7c15ULL) {}

  std::size_t batches_per_epoch() const { return (B_ + c_ - 1) / c_; }

  std::vector<std::uint32_t> next() {
    std::vector<std::uint32_t> ids(B_);
    for (std::uint32_t i = 0; i < B_; ++i) ids[i] = i;
    if (iid_) {
      for (std::size_t i = 0; i < c_; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, B_ - 1);
        std::swap(ids[i], ids[pick(rng_)]);
      }
      ids.resize(c_);
      return ids;
    }
    if (cursor_ == 0) {
      order_ = ids;
      std::shuffle(order_.begin(), order_.end(), rng_);
    }
    const std::size_t end = std::min(B_, cursor_ + c_);
    std::vector<std::uint32_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                   order_.begin() + static_cast<std::ptrdiff_t>(end));
    cursor_ = end == B_ ? 0 : end;
    return out;
  }

 private:
  std::size_t B_, c_;
  bool iid_;
  Rng rng_;
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
};

struct StepOutcome {
  GradSet grads;
  StepReport report;
};

/// One optimisation step of `method`. `exact` must hold the evaluation at the
/// current parameters for backward-sgd; it is ignored otherwise.
inline StepOutcome train_step(const RunConfig& c, const Problem& p, ModelState& s, const MiniBatch* batch,
                              std::int64_t step, const Evaluation* exact, OpCounter* counter) {
  StepOutcome o;
  const auto& m = c.method;
  const bool gcn = s.kind == ModelKind::Gcn;
  bool updated = false;
  if (m == "gd") {
    if (gcn) {
      auto cache = forward_full(p.full, p.features, s.conv, counter);
      auto g = backward_full(p, cache, s.conv);
      o.grads = std::move(g.grads);
      o.report.loss = g.loss;
    } else {
      auto f = rec_full_gradients(p, s.rec, c.solver());
      o.grads = std::move(f.grads);
      o.report.loss = f.loss;
      o.report.fwd_iters = f.state.trace.iterations;
      o.report.bwd_iters = f.aux.trace.iterations;
      if (counter != nullptr) counter->touched_rows += 2 * p.n();
    }
  } else if (m == "backward-sgd") {
    if (exact == nullptr) throw ConfigError("backward-sgd needs the exact evaluation");
    if (gcn) {
      o.grads = backward_sgd_grads(*batch, exact->cache, exact->conv);
    } else {
      o.grads = backward_sgd_grads(*batch, p, exact->rec);
    }
    o.report.loss = exact->loss;
    if (counter != nullptr) counter->touched_rows += batch->num_core();
  } else if (m == "lmc-conv" || m == "gas-conv") {
    ConvStepOptions opts;
    opts.mode = m == "lmc-conv" ? Compensation::Lmc : Compensation::Gas;
    auto r = lmc_conv_step(p, *batch, s.conv, s.hconv, beta_schedule(c, batch->num_sampled()), c.lr, opts, step,
                           counter);
    updated = true;
    o.grads = std::move(r.grads);
    o.report = r.report;
  } else if (m == "lmc-rec" || m == "gas-rec") {
    RecStepOptions opts{m == "lmc-rec" ? Compensation::Lmc : Compensation::Gas, c.solver()};
    auto r = lmc_rec_step(p, *batch, s.rec, s.hrec, c.lr, opts, step, counter);
    updated = true;
    o.grads = std::move(r.grads);
    o.report = r.report;
  } else if (m == "cluster") {
    if (gcn) {
      auto r = cluster_conv_grads(p, *batch, s.conv, counter);
      o.grads = std::move(r.grads);
      o.report = r.report;
    } else {
      auto r = cluster_rec_grads(p, *batch, s.rec, c.solver(), counter);
      o.grads = std::move(r.grads);
      o.report = r.report;
    }
  } else {
    throw ConfigError("unknown method '" + m + "'");
  }
  o.report.step = static_cast<std::size_t>(step);
  o.report.grad_norm = o.grads.norm();
  if (counter != nullptr) o.report.touched_rows = counter->touched_rows;
  if (!updated) {
    if (gcn) sgd_update(s.conv, o.grads, c.lr);
    else sgd_update(s.rec, o.grads, c.lr);
  }
  return o;
}

/// Relative distance of the stored histories from the exact values. Methods
/// without a history store count as a zero store; exact methods as exact.
inline std::pair<double, double> history_errors(const std::string& method, const ModelState& s,
                                                const Evaluation& exact) {
  if (method == "gd" || method == "backward-sgd") return {0.0, 0.0};
  if (method == "cluster") return {1.0, 1.0};
  if (s.kind == ModelKind::Gcn) {
    return {stacked_rel_err(s.hconv.H, exact.cache.H), stacked_rel_err(s.hconv.V, exact.conv.V)};
  }
  return {rel_err(s.hrec.H, exact.rec.state.H), rel_err(s.hrec.V, exact.rec.aux.V)};
}

struct MetricsRow {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  double grad_norm = 0.0;
  int fwd_iters = 0;
  int bwd_iters = 0;
  double wall_ms = 0.0;
};

inline const char* kMetricsHeader = "epoch,step,loss,train_acc,val_acc,grad_norm,fwd_iters,bwd_iters,wall_ms";

inline std::string serialize_metrics(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + format_double(r.loss) + "," +
           format_double(r.train_acc) + "," + format_double(r.val_acc) + "," + format_double(r.grad_norm) + "," +
           std::to_string(r.fwd_iters) + "," + std::to_string(r.bwd_iters) + "," + format_double(r.wall_ms) + "\n";
  }
  return out;
}

struct TrainResult {
  std::vector<MetricsRow> metrics;
  ErrorTrace trace;
  std::vector<StepReport> steps;
  ModelState state;
  Partition partition;
};

struct TrainHooks {
  /// Called after every step with the step report and, when a diagnostic was
  /// due, the exact evaluation at the pre-step parameters.
  std::function<void(const StepReport&, const Evaluation*)> on_step;
};

/// Training loop. Diagnostic rows compare each step's gradient with the exact
/// gradient at the same parameters.
inline TrainResult run_training(const RunConfig& cfg, const Problem& p, const Dataset* ds = nullptr,
                                const TrainHooks& hooks = {}, bool allow_zero_lr = false) {
  validate(cfg, allow_zero_lr);
  using clock = std::chrono::steady_clock;
  TrainResult res;
  res.state = init_model(cfg, p);
  ModelState& s = res.state;
  const bool full_batch_method = cfg.method == "gd";
  if (!full_batch_method) res.partition = make_partition(cfg, p.graph);
  BatchScheduler sched(cfg.parts, cfg.batch, cfg.sampling == "iid", cfg.seed);
  const std::size_t per_epoch = full_batch_method ? 1 : sched.batches_per_epoch();
  const std::size_t total = cfg.steps ? *cfg.steps : cfg.epochs * per_epoch;
  const LabeledSet val = ds != nullptr ? ds->mask_of(Split::Val) : LabeledSet{};
  const LabeledSet test = ds != nullptr ? ds->mask_of(Split::Test) : LabeledSet{};
  const SolverOptions solver = cfg.solver();
  double wall = 0.0;
  int last_fwd = 0, last_bwd = 0;

  Evaluation eval = evaluate(p, s, solver);
  auto record = [&](std::size_t epoch, std::size_t step) {
    MetricsRow r;
    r.epoch = epoch;
    r.step = step;
    r.loss = eval.loss;
    r.train_acc = accuracy(eval.logits, p.labels.classes, p.labels.train);
    if (ds != nullptr) {
      r.val_acc = accuracy(eval.logits, p.labels.classes, val);
      r.test_acc = accuracy(eval.logits, p.labels.classes, test);
    }
    r.grad_norm = eval.grads.norm();
    r.fwd_iters = last_fwd;
    r.bwd_iters = last_bwd;
    r.wall_ms = cfg.timing ? wall : 0.0;
    res.metrics.push_back(r);
  };
  record(0, 0);

  bool eval_current = true;
  for (std::size_t k = 1; k <= total; ++k) {
    const bool epoch_end = k % per_epoch == 0 || k == total;
    const bool diag_due = cfg.diag_every > 0 ? (k % cfg.diag_every == 0) : epoch_end;
    const bool need_exact = diag_due || cfg.method == "backward-sgd";
    if (need_exact && !eval_current) {
      eval = evaluate(p, s, solver, &eval);
      eval_current = true;
    }
    std::optional<MiniBatch> batch;
    if (!full_batch_method) batch = make_minibatch(p.graph, res.partition, sched.next(), p.labels.train);
    OpCounter counter;
    const auto t0 = clock::now();
    StepOutcome o = train_step(cfg, p, s, batch ? &*batch : nullptr, static_cast<std::int64_t>(k),
                               need_exact ? &eval : nullptr, &counter);
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    wall += ms;
    if (o.report.fwd_iters) last_fwd = *o.report.fwd_iters;
    if (o.report.bwd_iters) last_bwd = *o.report.bwd_iters;
    if (diag_due) {
      const auto [dh, dv] = history_errors(cfg.method, s, eval);
      o.report.rel_grad_err = rel_err(o.grads, eval.grads);
      o.report.d_h = dh;
      o.report.d_v = dv;
      track_errors(res.trace, o.report, o.grads, eval.grads, dh, dv, cfg.timing ? ms : 0.0);
    }
    eval_current = cfg.lr == 0.0 && eval_current;
    if (hooks.on_step) hooks.on_step(o.report, diag_due ? &eval : nullptr);
    res.steps.push_back(o.report);
    if (epoch_end) {
      if (!eval_current) {
        eval = evaluate(p, s, solver, &eval);
        eval_current = true;
      }
      record((k + per_epoch - 1) / per_epoch, k);
    }
  }
  return res;
}

inline Checkpoint make_checkpoint(const ModelState& s, bool with_history) {
  Checkpoint c;
  c.model = s.kind;
  c.params = param_blocks(s).blocks;
  if (with_history) {
    if (s.kind == ModelKind::Gcn) {
      for (std::size_t l = 1; l < s.hconv.H.size(); ++l) c.history.push_back(s.hconv.H[l]);
      for (std::size_t l = 1; l < s.hconv.V.size(); ++l) c.history.push_back(s.hconv.V[l]);
    } else {
      c.history = {s.hrec.H, s.hrec.V, s.hrec.Z};
    }
  }
  return c;
}

/// Rebuilds parameters from a checkpoint; the model shapes come from `cfg`.
inline ModelState restore_checkpoint(const RunConfig& cfg, const Problem& p, const Checkpoint& c) {
  if (c.model != cfg.model_kind()) throw ConfigError("checkpoint model does not match config");
  ModelState s = init_model(cfg, p);
  GradSet blocks = param_blocks(s);
  if (blocks.blocks.size() != c.params.size()) throw ConfigError("checkpoint block count does not match config");
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    if (!blocks.blocks[i].same_shape(c.params[i])) throw ConfigError("checkpoint block shape does not match config");
  }
  if (s.kind == ModelKind::Gcn) s.conv.set_blocks(GradSet{c.params});
  else s.rec.set_blocks(GradSet{c.params});
  return s;
}

inline bool uses_history(const std::string& method) {
  return method == "lmc-conv" || method == "gas-conv" || method == "lmc-rec" || method == "gas-rec";
}

inline std::string steps_jsonl(const std::vector<StepReport>& steps) {
  std::string out;
  for (const auto& r : steps) out += to_json(r).dump() + "\n";
  return out;
}

/// Writes metrics.csv, trace.csv, steps.jsonl and checkpoint.bin into cfg.out.
inline void write_outputs(const RunConfig& cfg, const TrainResult& r) {
  namespace fs = std::filesystem;
  const fs::path out(cfg.out);
  fs::create_directories(out);
  write_file(out / "metrics.csv", serialize_metrics(r.metrics));
  write_file(out / "trace.csv", serialize_trace(r.trace));
  write_file(out / "steps.jsonl", steps_jsonl(r.steps));
  save_checkpoint(make_checkpoint(r.state, uses_history(cfg.method)), out / "checkpoint.bin");
}

/// The three samplers compared by `diagnose` for a model.
inline std::vector<std::string> diagnose_methods(ModelKind m) {
  if (m == ModelKind::Gcn) return {"lmc-conv", "gas-conv", "cluster"};
  return {"lmc-rec", "gas-rec", "cluster"};
}

struct DiagnoseResult {
  std::map<std::string, ErrorTrace> traces;
};

/// Paired runs with a diagnostic row after every step; identical partition,
/// batch sequence and initial parameters for every method.
inline DiagnoseResult run_diagnose(RunConfig cfg, const Problem& p, const Dataset* ds = nullptr) {
  DiagnoseResult d;
  cfg.diag_every = 1;
  for (const auto& m : diagnose_methods(cfg.model_kind())) {
    RunConfig c = cfg;
    c.method = m;
    d.traces[m] = run_training(c, p, ds, {}, true).trace;
  }
  return d;
}

struct OracleReport {
  double max_error = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string summary;
};

/// Entries smaller than this are compared in absolute terms: central
/// differences at eps = 1e-5 carry roughly 1e-11 of rounding noise.
inline constexpr double kGradcheckFloor = 1e-5;

/// Analytic gradients against central differences at a random parameter
/// point of a random instance. Instances whose pre-activations come within
/// 1e-6 of a ReLU kink are redrawn.
inline OracleReport run_gradcheck(const RunConfig& cfg, double eps = 1e-5) {
  const ModelKind kind = cfg.model_kind();
  const std::size_t n = cfg.nodes > 0 ? cfg.nodes : (kind == ModelKind::Gcn ? 20 : 10);
  OracleReport rep;
  rep.threshold = cfg.threshold.value_or(kind == ModelKind::Gcn ? 1e-5 : 1e-3);
  const std::size_t d = cfg.hidden;
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    const std::uint64_t seed = cfg.seed * 1000 + attempt;
    Problem p = random_problem(n, d, 3, 3.0, seed);
    RunConfig c = cfg;
    c.seed = seed;
    c.dims.clear();
    if (kind == ModelKind::Gcn) {
      ModelState s = init_model(c, p);
      auto cache = forward_full(p, s.conv);
      if (min_abs_preactivation(cache) < 1e-6) continue;
      const GradSet analytic = backward_full(p, cache, s.conv).grads;
      auto refs = s.conv.block_refs();
      for (std::size_t b = 0; b < refs.size(); ++b) {
        auto f = [&] { return loss_full(forward_full(p, s.conv), p.labels); };
        const DenseMatrix fd = finite_diff(f, *refs[b], eps);
        rep.max_error = std::max(rep.max_error, max_elementwise_rel_err(analytic.blocks[b], fd, kGradcheckFloor));
      }
    } else {
      c.tol = 1e-12;
      c.max_iter = std::max(c.max_iter, 5000);
      ModelState s = init_model(c, p);
      // Random c so the bias block is exercised away from zero.
      Rng rng(seed + 7);
      std::normal_distribution<double> normal(0.0, 0.3);
      for (double& v : s.rec.c.values()) v = normal(rng);
      const auto full = rec_full_gradients(p, s.rec, c.solver());
      if (min_abs_preactivation(full.state) < 1e-6) continue;
      auto refs = s.rec.block_refs();
      for (std::size_t b = 0; b < refs.size(); ++b) {
        auto f = [&] {
          auto st = solve_forward(p, s.rec, c.solver(), &full.state.H);
          require_converged(st.trace, "gradcheck solve");
          std::vector<NodeId> all(p.n());
          for (NodeId v = 0; v < all.size(); ++v) all[v] = v;
          return output_pullback(matmul(st.H, s.rec.out), labeled_rows(p.labels, all), p.labels.train.count).loss;
        };
        const DenseMatrix fd = finite_diff(f, *refs[b], eps);
        rep.max_error = std::max(rep.max_error, max_elementwise_rel_err(full.grads.blocks[b], fd, kGradcheckFloor));
      }
    }
    rep.pass = rep.max_error <= rep.threshold;
    char buf[160];
    std::snprintf(buf, sizeof buf, "gradcheck %s n=%zu: max elementwise rel err %.3e (threshold %.1e)",
                  to_string(kind), n, rep.max_error, rep.threshold);
    rep.summary = buf;
    return rep;
  }
  throw NumericError("gradcheck: could not draw an instance away from ReLU kinks");
}

/// Averages backward-SGD gradients over every batch of c clusters and
/// compares with the full gradient.
inline OracleReport run_enumerate(const RunConfig& cfg) {
  const ModelKind kind = cfg.model_kind();
  const std::size_t n = cfg.nodes > 0 ? cfg.nodes : 12;
  OracleReport rep;
  rep.threshold = cfg.threshold.value_or(1e-10);
  Problem p = random_problem(n, 4, 3, 3.0, cfg.seed);
  RunConfig c = cfg;
  c.dims.clear();
  ModelState s = init_model(c, p);
  const Partition part = make_partition(c, p.graph);
  const Evaluation exact = evaluate(p, s, c.solver());
  auto fn = [&](const std::vector<std::uint32_t>& parts) {
    const MiniBatch b = make_minibatch(p.graph, part, parts, p.labels.train);
    return kind == ModelKind::Gcn ? backward_sgd_grads(b, exact.cache, exact.conv)
                                  : backward_sgd_grads(b, p, exact.rec);
  };
  const auto mean = enumerate_batches(part, c.batch, fn);
  rep.max_error = max_abs_diff_per_block(mean.mean, exact.grads);
  rep.pass = rep.max_error <= rep.threshold;
  char buf[160];
  std::snprintf(buf, sizeof buf, "enumerate %s n=%zu B=%zu c=%zu: %zu batches, max |mean - full| %.3e (threshold %.1e)",
                to_string(kind), n, c.parts, c.batch, mean.num_batches, rep.max_error, rep.threshold);
  rep.summary = buf;
  return rep;
}

}  // namespace lmc
