// Command-line driver: lmc {partition|train|diagnose|gradcheck|enumerate|gen}.
//
// Settings come from defaults, then --config FILE (key = value), then flags.
// Exit codes: 0 ok, 2 configuration, 3 numeric, 4 solver, 5 oracle failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "lmc/dataset.hpp"
#include "lmc/errors.hpp"
#include "lmc/io.hpp"
#include "lmc/trainer.hpp"

namespace {

namespace fs = std::filesystem;

struct RunFlags {
  std::string config_file;
  std::map<std::string, std::string> values;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option(flag, values[key], help);
  }

  lmc::RunConfig resolve(CLI::App* app) {
    lmc::RunConfig cfg;
    if (!config_file.empty()) lmc::apply_settings(cfg, lmc::load_config_file(config_file));
    std::map<std::string, std::string> given;
    for (const auto& [key, value] : values) {
      if (app->get_option("--" + flag_name(key))->count() > 0) given[key] = value;
    }
    lmc::apply_settings(cfg, given);
    return cfg;
  }

  static std::string flag_name(std::string key) {
    for (char& ch : key)
      if (ch == '_') ch = '-';
    return key;
  }
};

void add_run_flags(CLI::App* app, RunFlags& f) {
  app->add_option("--config", f.config_file, "key = value settings file");
  const std::pair<const char*, const char*> keys[] = {
      {"method", "gd|backward-sgd|lmc-conv|lmc-rec|gas-conv|gas-rec|cluster"},
      {"model", "gcn|recgcn"},
      {"layers", "number of GCN layers L"},
      {"hidden", "hidden width"},
      {"dims", "comma-separated hidden widths d_1..d_L"},
      {"lr", "learning rate"},
      {"epochs", "number of epochs"},
      {"steps", "number of steps (overrides epochs)"},
      {"parts", "number of clusters B"},
      {"batch", "clusters per batch c"},
      {"partition", "clustered|random"},
      {"seed", "random seed"},
      {"beta_alpha", "beta scale alpha in [0, 1]"},
      {"beta_score", "x2|2x-x2|x|1"},
      {"tol", "fixed-point tolerance"},
      {"max_iter", "fixed-point iteration cap"},
      {"kappa", "well-posedness bound"},
      {"data", "dataset directory"},
      {"out", "output directory"},
      {"diag_every", "diagnostic cadence in steps (0: once per epoch)"},
      {"sampling", "epoch|iid"},
      {"timing", "record wall-clock times"},
      {"nodes", "oracle instance size"},
      {"threshold", "oracle pass threshold"},
  };
  for (const auto& [key, help] : keys) f.add(app, "--" + RunFlags::flag_name(key), key, help);
}

lmc::Dataset require_dataset(const lmc::RunConfig& cfg) {
  if (cfg.data.empty()) throw lmc::ConfigError("--data is required");
  return lmc::load_dataset(cfg.data);
}

int cmd_partition(const lmc::RunConfig& cfg) {
  const auto ds = require_dataset(cfg);
  const auto part = lmc::make_partition(cfg, ds.graph);
  fs::create_directories(cfg.out);
  lmc::write_file(fs::path(cfg.out) / "partition.tsv", lmc::serialize_partition(part));
  std::printf("partition %s B=%zu: %zu cut edges of %zu\n", cfg.partition.c_str(), cfg.parts,
              lmc::cut_edges(ds.graph, part), ds.graph.num_edges());
  return 0;
}

int cmd_train(const lmc::RunConfig& cfg) {
  const auto ds = require_dataset(cfg);
  const auto problem = lmc::to_problem(ds);
  const auto res = lmc::run_training(cfg, problem, &ds);
  lmc::write_outputs(cfg, res);
  const auto& last = res.metrics.back();
  std::printf("%s/%s: %zu steps, loss %.6g, train acc %.4f, val acc %.4f, grad norm %.4g\n", cfg.method.c_str(),
              cfg.model.c_str(), last.step, last.loss, last.train_acc, last.val_acc, last.grad_norm);
  return 0;
}

int cmd_diagnose(const lmc::RunConfig& cfg) {
  const auto ds = require_dataset(cfg);
  const auto problem = lmc::to_problem(ds);
  const auto res = lmc::run_diagnose(cfg, problem, &ds);
  fs::create_directories(cfg.out);
  for (const auto& [method, trace] : res.traces) {
    lmc::write_trace(trace, fs::path(cfg.out) / ("trace_" + method + ".csv"));
    const auto& last = trace.rows.back();
    std::printf("%-9s mean rel grad err %.4e, final d_h %.4e, final d_v %.4e\n", method.c_str(),
                trace.mean_grad_rel_err(), last.d_h, last.d_v);
  }
  return 0;
}

int report_oracle(const lmc::OracleReport& r) {
  std::printf("%s: %s\n", r.summary.c_str(), r.pass ? "PASS" : "FAIL");
  if (!r.pass) throw lmc::OracleFailure(r.summary);
  return 0;
}

struct GenFlags {
  std::string kind = "two-cluster";
  std::size_t n = 400;
  std::size_t dx = 8;
  double noise = 1.0;
  std::uint64_t seed = 0;
  double intra = 8.0;
  double inter = 1.0;
  std::size_t chain_length = 10;
  double train = 0.5;
  double val = 0.25;
  std::string out;
};

int cmd_gen(const GenFlags& g) {
  lmc::SyntheticOptions o;
  o.kind = lmc::parse_synthetic_kind(g.kind);
  o.n = g.n;
  o.feature_dim = g.dx;
  o.noise = g.noise;
  o.seed = g.seed;
  o.intra_degree = g.intra;
  o.inter_degree = g.inter;
  o.chain_length = g.chain_length;
  o.train_fraction = g.train;
  o.val_fraction = g.val;
  const auto ds = lmc::gen_synthetic(o);
  lmc::save_dataset(ds, g.out);
  std::printf("wrote %s: n=%zu, %zu edges, d_x=%zu\n", g.out.c_str(), ds.n(), ds.graph.num_edges(),
              ds.features.cols());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mini-batch GNN training with historical values and local message compensation"};
  app.require_subcommand(1);

  RunFlags pf, tf, df, gf, ef;
  auto* partition = app.add_subcommand("partition", "partition a dataset graph and report cut edges");
  add_run_flags(partition, pf);
  auto* train = app.add_subcommand("train", "train a model; writes metrics.csv, trace.csv, steps.jsonl, checkpoint.bin");
  add_run_flags(train, tf);
  auto* diagnose = app.add_subcommand("diagnose", "paired error traces for the history-based and cluster samplers");
  add_run_flags(diagnose, df);
  auto* gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  add_run_flags(gradcheck, gf);
  auto* enumerate = app.add_subcommand("enumerate", "exact batch enumeration of backward-SGD gradients");
  add_run_flags(enumerate, ef);

  GenFlags gen_flags;
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset directory");
  gen->add_option("--kind", gen_flags.kind, "two-cluster|chain-label");
  gen->add_option("--n", gen_flags.n, "number of nodes");
  gen->add_option("--dx", gen_flags.dx, "feature dimension");
  gen->add_option("--noise", gen_flags.noise, "feature noise level");
  gen->add_option("--seed", gen_flags.seed, "random seed");
  gen->add_option("--intra", gen_flags.intra, "expected intra-cluster degree (two-cluster)");
  gen->add_option("--inter", gen_flags.inter, "expected inter-cluster degree (two-cluster)");
  gen->add_option("--chain-length", gen_flags.chain_length, "nodes per chain (chain-label)");
  gen->add_option("--train", gen_flags.train, "training fraction");
  gen->add_option("--val", gen_flags.val, "validation fraction");
  gen->add_option("--out", gen_flags.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*partition) return cmd_partition(pf.resolve(partition));
    if (*train) return cmd_train(tf.resolve(train));
    if (*diagnose) {
      auto cfg = df.resolve(diagnose);
      lmc::validate(cfg, true);
      return cmd_diagnose(cfg);
    }
    if (*gradcheck) {
      auto cfg = gf.resolve(gradcheck);
      if (cfg.model_kind() == lmc::ModelKind::Gcn && gradcheck->get_option("--layers")->count() == 0 &&
          cfg.dims.empty()) {
        cfg.layers = 3;
      }
      if (gradcheck->get_option("--hidden")->count() == 0 && cfg.hidden == lmc::RunConfig{}.hidden) cfg.hidden = 4;
      return report_oracle(lmc::run_gradcheck(cfg));
    }
    if (*enumerate) {
      auto cfg = ef.resolve(enumerate);
      if (enumerate->get_option("--parts")->count() == 0 && cfg.parts == lmc::RunConfig{}.parts) cfg.parts = 4;
      if (enumerate->get_option("--hidden")->count() == 0 && cfg.hidden == lmc::RunConfig{}.hidden) cfg.hidden = 4;
      return report_oracle(lmc::run_enumerate(cfg));
    }
    if (*gen) return cmd_gen(gen_flags);
  } catch (const lmc::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 2;
}
