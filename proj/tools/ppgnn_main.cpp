// Command-line driver for the latent-graph node-classification pipeline:
// training, benchmark sweeps, robustness/homophily/scaling studies, and
// plot rendering. Exit codes: 0 success, 1 usage or config error, 2 data
// error, 3 numerical failure.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ppgnn/ppgnn.hpp"

namespace {

using ppgnn::ExperimentConfig;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string mode;
  CLI::Option* out_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* mode_opt = nullptr;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags, bool config_required) {
  auto* config = cmd->add_option("--config", flags.config_path,
                                 "experiment configuration file (JSON)");
  if (config_required) config->required();
  flags.out_opt = cmd->add_option("--out", flags.out_dir, "output directory override");
  flags.seed_opt = cmd->add_option("--seed", flags.seed, "base training seed override");
  flags.mode_opt = cmd->add_option("--mode", flags.mode,
                                   "model override: ppgnn|ppgnn_anchor|gcn|mlp");
}

ExperimentConfig load_config(const CommonFlags& flags) {
  ExperimentConfig cfg = ppgnn::load_experiment_config(flags.config_path);
  if (flags.seed_opt->count()) cfg.train.seed = flags.seed;
  if (flags.mode_opt->count()) {
    cfg.model = ppgnn::parse_model_kind(flags.mode);
    cfg.train.model = cfg.model;
  }
  if (flags.out_opt->count()) cfg.output_dir = flags.out_dir;
  return cfg;
}

std::string fmt(double v) { return ppgnn::detail::format_real(v); }

void print_metrics(const ppgnn::MetricsRecord& record) {
  for (const auto& run : record.runs) {
    std::cout << "run " << run.run_index << " seed " << run.seed;
    if (run.failed)
      std::cout << " FAILED: " << run.error << "\n";
    else
      std::cout << " test_acc " << fmt(run.test_acc) << " (best epoch "
                << run.best_epoch << "/" << run.epochs_completed << ")\n";
  }
  std::cout << "mean_test_acc " << fmt(record.mean_test_acc) << " std "
            << fmt(record.std_test_acc) << "\n";
  if (record.failed_runs > 0)
    std::cout << "warning: " << record.failed_runs
              << " run(s) diverged; mean covers completed runs only\n";
}

int run_train(const CommonFlags& flags) {
  ExperimentConfig cfg = load_config(flags);
  cfg.num_runs = 1;
  const auto record = ppgnn::run_benchmark(cfg);
  print_metrics(record);
  std::cout << "wrote " << cfg.output_dir << "/metrics.json and epochs.jsonl\n";
  return 0;
}

int run_benchmark_cmd(const CommonFlags& flags) {
  const ExperimentConfig cfg = load_config(flags);
  const auto record = ppgnn::run_benchmark(cfg);
  print_metrics(record);
  std::cout << "wrote " << cfg.output_dir << "/metrics.json and epochs.jsonl\n";
  return 0;
}

int run_robustness_cmd(const CommonFlags& flags, const std::vector<double>& ratios,
                       const std::vector<std::string>& mode_names,
                       const std::vector<std::string>& model_names) {
  const ExperimentConfig cfg = load_config(flags);
  std::vector<ppgnn::NoiseMode> modes;
  for (const auto& name : mode_names) {
    if (name == "add")
      modes.push_back(ppgnn::NoiseMode::add);
    else if (name == "remove")
      modes.push_back(ppgnn::NoiseMode::remove);
    else
      throw ppgnn::ConfigError("robustness: mode must be add or remove, got '" +
                               name + "'");
  }
  std::vector<ppgnn::ModelKind> models;
  for (const auto& name : model_names) models.push_back(ppgnn::parse_model_kind(name));
  const auto rows = ppgnn::run_robustness(cfg, ratios, modes, models);
  std::cout << ppgnn::robustness_csv(rows);
  std::cout << "wrote " << cfg.output_dir << "/robustness.csv\n";
  return 0;
}

int run_homophily_cmd(const CommonFlags& flags, int bins) {
  const ExperimentConfig cfg = load_config(flags);
  const ppgnn::GraphDataset data = ppgnn::materialize_dataset(cfg);
  const ppgnn::FitResult fitted = ppgnn::fit(data, cfg.train);
  const auto rows = ppgnn::run_homophily(fitted.params, data, bins, cfg.train.seed);
  ppgnn::write_atomic(std::filesystem::path(cfg.output_dir) / "homophily.csv",
                      ppgnn::homophily_csv(rows));
  std::cout << ppgnn::homophily_csv(rows);
  std::vector<double> bin_ids, ratios;
  for (std::size_t b = 0; b < rows.size(); ++b)
    if (rows[b].has_ratio) {
      bin_ids.push_back(static_cast<double>(b));
      ratios.push_back(rows[b].same_label_ratio);
    }
  if (bin_ids.size() >= 2)
    std::cout << "spearman_rho " << fmt(ppgnn::spearman_rho(bin_ids, ratios)) << "\n";
  std::cout << "wrote " << cfg.output_dir << "/homophily.csv\n";
  return 0;
}

int run_scaling_cmd(const CommonFlags& flags, const std::vector<ppgnn::Index>& sizes,
                    ppgnn::Index anchors, ppgnn::Index k, int reps) {
  const std::string out_dir = flags.out_opt->count() ? flags.out_dir : "out";
  const std::uint64_t seed = flags.seed_opt->count() ? flags.seed : 17;
  const auto rows = ppgnn::run_scaling(sizes, anchors, k, reps, seed);
  ppgnn::write_atomic(std::filesystem::path(out_dir) / "scaling.csv",
                      ppgnn::scaling_csv(rows));
  std::cout << ppgnn::scaling_csv(rows);
  std::vector<double> ns, node_ms, anchor_ms, anchor_ns;
  for (const auto& row : rows) {
    if (!row.node_oom && row.node_ms > 0.0) {
      ns.push_back(static_cast<double>(row.n));
      node_ms.push_back(row.node_ms);
    }
    if (row.anchor_ms > 0.0) {
      anchor_ns.push_back(static_cast<double>(row.n));
      anchor_ms.push_back(row.anchor_ms);
    }
  }
  if (ns.size() >= 2)
    std::cout << "node_node_slope " << fmt(ppgnn::log_log_slope(ns, node_ms)) << "\n";
  if (anchor_ns.size() >= 2)
    std::cout << "anchor_slope " << fmt(ppgnn::log_log_slope(anchor_ns, anchor_ms))
              << "\n";
  std::cout << "wrote " << out_dir << "/scaling.csv\n";
  return 0;
}

int run_plot_cmd(const CommonFlags& flags) {
  const std::string out_dir = flags.out_opt->count() ? flags.out_dir : "out";
  for (const auto& path : ppgnn::export_plots(out_dir))
    std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int run_validate_config(const CommonFlags& flags) {
  const ExperimentConfig cfg = load_config(flags);
  std::cout << ppgnn::serialize_experiment_config(cfg).dump(2) << "\n";
  std::cout << "config OK\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-graph inference for node classification"};
  app.require_subcommand(1);

  CommonFlags train_flags, bench_flags, robust_flags, homo_flags, scale_flags,
      plot_flags, validate_flags;

  auto* train_cmd = app.add_subcommand("train", "one training run, logged per epoch");
  add_common_flags(train_cmd, train_flags, true);

  auto* bench_cmd =
      app.add_subcommand("benchmark", "seeded multi-run benchmark with metrics files");
  add_common_flags(bench_cmd, bench_flags, true);

  auto* robust_cmd = app.add_subcommand(
      "robustness", "accuracy under edge addition/deletion at several ratios");
  add_common_flags(robust_cmd, robust_flags, true);
  std::vector<double> ratios{0.25, 0.5, 0.75};
  std::vector<std::string> noise_modes{"add", "remove"};
  std::vector<std::string> robust_models{"ppgnn", "gcn"};
  robust_cmd->add_option("--ratios", ratios, "perturbation ratios")->delimiter(',');
  robust_cmd->add_option("--noise-modes", noise_modes, "add and/or remove")
      ->delimiter(',');
  robust_cmd->add_option("--models", robust_models, "model variants to compare")
      ->delimiter(',');

  auto* homo_cmd = app.add_subcommand(
      "homophily", "same-label ratio per refined-probability bin after training");
  add_common_flags(homo_cmd, homo_flags, true);
  int bins = 10;
  homo_cmd->add_option("--bins", bins, "number of equal-width probability bins");

  auto* scale_cmd = app.add_subcommand(
      "scaling", "graph-learning stage wall time across SBM sizes");
  add_common_flags(scale_cmd, scale_flags, false);
  std::vector<ppgnn::Index> sizes{1000, 2000, 4000, 8000};
  ppgnn::Index scale_anchors = 128;
  ppgnn::Index scale_k = 4;
  int reps = 5;
  scale_cmd->add_option("--sizes", sizes, "ascending node counts")->delimiter(',');
  scale_cmd->add_option("--anchors", scale_anchors, "anchor count s");
  scale_cmd->add_option("--k", scale_k, "edges sampled per node");
  scale_cmd->add_option("--reps", reps, "repetitions per cell (median reported)");

  auto* plot_cmd =
      app.add_subcommand("plot", "render robustness/homophily CSVs to SVG");
  add_common_flags(plot_cmd, plot_flags, false);

  auto* validate_cmd =
      app.add_subcommand("validate-config", "parse, check, and echo a config");
  add_common_flags(validate_cmd, validate_flags, true);

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) return run_train(train_flags);
    if (bench_cmd->parsed()) return run_benchmark_cmd(bench_flags);
    if (robust_cmd->parsed())
      return run_robustness_cmd(robust_flags, ratios, noise_modes, robust_models);
    if (homo_cmd->parsed()) return run_homophily_cmd(homo_flags, bins);
    if (scale_cmd->parsed())
      return run_scaling_cmd(scale_flags, sizes, scale_anchors, scale_k, reps);
    if (plot_cmd->parsed()) return run_plot_cmd(plot_flags);
    if (validate_cmd->parsed()) return run_validate_config(validate_flags);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ppgnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ppgnn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const ppgnn::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
