#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <new>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ppgnn/dataset.hpp"
#include "ppgnn/error.hpp"
#include "ppgnn/svg_plot.hpp"
#include "ppgnn/training.hpp"

namespace ppgnn {

inline std::string model_kind_name(ModelKind m) {
  switch (m) {
    case ModelKind::ppgnn: return "ppgnn";
    case ModelKind::ppgnn_anchor: return "ppgnn_anchor";
    case ModelKind::gcn_baseline: return "gcn";
    case ModelKind::mlp_baseline: return "mlp";
  }
  throw ConfigError("model_kind_name: unknown model kind");
}

inline ModelKind parse_model_kind(const std::string& name) {
  if (name == "ppgnn") return ModelKind::ppgnn;
  if (name == "ppgnn_anchor") return ModelKind::ppgnn_anchor;
  if (name == "gcn") return ModelKind::gcn_baseline;
  if (name == "mlp") return ModelKind::mlp_baseline;
  throw ConfigError("unknown model '" + name +
                    "' (expected ppgnn|ppgnn_anchor|gcn|mlp)");
}

/// Synthetic-benchmark parameters (stochastic block model).
struct SbmSpec {
  Index num_nodes = 200;
  int num_blocks = 4;
  double p_in = 0.2;
  double p_out = 0.01;
  Index feat_dim = 16;
  double feat_noise = 0.1;
  std::uint64_t seed = 7;
};

/// Everything one experiment needs: a data source (directory or SBM spec,
/// exactly one), the model variant, training hyperparameters, optional
/// structural noise, run count and output directory.
struct ExperimentConfig {
  std::string dataset_path;  // empty unless the source is a directory
  std::optional<SbmSpec> sbm;
  ModelKind model = ModelKind::ppgnn;
  TrainConfig train;
  std::optional<NoiseSpec> noise;
  int num_runs = 5;
  std::string output_dir = "out";

  void validate() const {
    if (dataset_path.empty() == !sbm.has_value())
      throw ConfigError("config: exactly one of 'dataset' and 'sbm' must be set");
    if (num_runs < 1) throw ConfigError("config: num_runs must be >= 1");
    train.validate();
    if (noise && noise->ratio < 0.0)
      throw ConfigError("config: noise ratio must be >= 0");
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j,
                                const std::vector<std::string>& known,
                                const std::string& where) {
  for (const auto& item : j.items())
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  detail::reject_unknown_keys(
      j, {"dataset", "sbm", "model", "train", "noise", "num_runs", "output_dir"},
      "the top level");
  ExperimentConfig cfg;
  detail::read_field(j, "dataset", cfg.dataset_path);
  if (j.contains("sbm")) {
    const auto& s = j.at("sbm");
    detail::reject_unknown_keys(
        s, {"num_nodes", "num_blocks", "p_in", "p_out", "feat_dim", "feat_noise", "seed"},
        "'sbm'");
    SbmSpec spec;
    detail::read_field(s, "num_nodes", spec.num_nodes);
    detail::read_field(s, "num_blocks", spec.num_blocks);
    detail::read_field(s, "p_in", spec.p_in);
    detail::read_field(s, "p_out", spec.p_out);
    detail::read_field(s, "feat_dim", spec.feat_dim);
    detail::read_field(s, "feat_noise", spec.feat_noise);
    detail::read_field(s, "seed", spec.seed);
    cfg.sbm = spec;
  }
  if (j.contains("model")) {
    std::string name;
    detail::read_field(j, "model", name);
    cfg.model = parse_model_kind(name);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown_keys(
        t,
        {"learning_rate", "max_epochs", "patience", "k", "num_anchors", "seed", "beta1",
         "beta2", "adam_eps", "dropout", "embed_hidden", "embed_out", "embed_graph_conv",
         "gcn_hidden", "gcn_layers", "record_timing"},
        "'train'");
    detail::read_field(t, "learning_rate", cfg.train.learning_rate);
    detail::read_field(t, "max_epochs", cfg.train.max_epochs);
    detail::read_field(t, "patience", cfg.train.patience);
    detail::read_field(t, "k", cfg.train.k);
    detail::read_field(t, "num_anchors", cfg.train.num_anchors);
    detail::read_field(t, "seed", cfg.train.seed);
    detail::read_field(t, "beta1", cfg.train.beta1);
    detail::read_field(t, "beta2", cfg.train.beta2);
    detail::read_field(t, "adam_eps", cfg.train.adam_eps);
    detail::read_field(t, "dropout", cfg.train.dropout);
    detail::read_field(t, "embed_hidden", cfg.train.embed_hidden);
    detail::read_field(t, "embed_out", cfg.train.embed_out);
    detail::read_field(t, "embed_graph_conv", cfg.train.embed_graph_conv);
    detail::read_field(t, "gcn_hidden", cfg.train.gcn_hidden);
    detail::read_field(t, "gcn_layers", cfg.train.gcn_layers);
    detail::read_field(t, "record_timing", cfg.train.record_timing);
  }
  if (j.contains("noise")) {
    const auto& noise = j.at("noise");
    detail::reject_unknown_keys(noise, {"mode", "ratio", "seed"}, "'noise'");
    NoiseSpec spec;
    std::string mode = "add";
    detail::read_field(noise, "mode", mode);
    if (mode == "add")
      spec.mode = NoiseMode::add;
    else if (mode == "remove")
      spec.mode = NoiseMode::remove;
    else
      throw ConfigError("config: noise mode must be 'add' or 'remove'");
    detail::read_field(noise, "ratio", spec.ratio);
    detail::read_field(noise, "seed", spec.seed);
    cfg.noise = spec;
  }
  detail::read_field(j, "num_runs", cfg.num_runs);
  detail::read_field(j, "output_dir", cfg.output_dir);
  cfg.train.model = cfg.model;
  cfg.validate();
  return cfg;
}

inline nlohmann::ordered_json serialize_experiment_config(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  if (!cfg.dataset_path.empty()) j["dataset"] = cfg.dataset_path;
  if (cfg.sbm) {
    j["sbm"] = {{"num_nodes", cfg.sbm->num_nodes}, {"num_blocks", cfg.sbm->num_blocks},
                {"p_in", cfg.sbm->p_in},           {"p_out", cfg.sbm->p_out},
                {"feat_dim", cfg.sbm->feat_dim},   {"feat_noise", cfg.sbm->feat_noise},
                {"seed", cfg.sbm->seed}};
  }
  j["model"] = model_kind_name(cfg.model);
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"max_epochs", cfg.train.max_epochs},
                {"patience", cfg.train.patience},
                {"k", cfg.train.k},
                {"num_anchors", cfg.train.num_anchors},
                {"seed", cfg.train.seed},
                {"beta1", cfg.train.beta1},
                {"beta2", cfg.train.beta2},
                {"adam_eps", cfg.train.adam_eps},
                {"dropout", cfg.train.dropout},
                {"embed_hidden", cfg.train.embed_hidden},
                {"embed_out", cfg.train.embed_out},
                {"embed_graph_conv", cfg.train.embed_graph_conv},
                {"gcn_hidden", cfg.train.gcn_hidden},
                {"gcn_layers", cfg.train.gcn_layers},
                {"record_timing", cfg.train.record_timing}};
  if (cfg.noise) {
    j["noise"] = {{"mode", cfg.noise->mode == NoiseMode::add ? "add" : "remove"},
                  {"ratio", cfg.noise->ratio},
                  {"seed", cfg.noise->seed}};
  }
  j["num_runs"] = cfg.num_runs;
  j["output_dir"] = cfg.output_dir;
  return j;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return parse_experiment_config(j);
}

inline GraphDataset materialize_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  GraphDataset data = cfg.sbm ? generate_sbm(cfg.sbm->num_nodes, cfg.sbm->num_blocks,
                                             cfg.sbm->p_in, cfg.sbm->p_out,
                                             cfg.sbm->feat_dim, cfg.sbm->feat_noise,
                                             cfg.sbm->seed)
                              : load_dataset(cfg.dataset_path);
  if (cfg.noise && cfg.noise->ratio > 0.0) data = perturb_edges(data, *cfg.noise);
  return data;
}

/// Population mean and standard deviation (σ over n, so one run → σ = 0).
inline std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

struct RunMetrics {
  int run_index = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double test_acc = 0.0;
  int best_epoch = 0;
  int epochs_completed = 0;
};

struct MetricsRecord {
  std::vector<RunMetrics> runs;
  std::vector<std::vector<EpochRecord>> traces;  // aligned with runs
  double mean_test_acc = 0.0;
  double std_test_acc = 0.0;
  int failed_runs = 0;
};

/// num_runs independent fits with seeds base+0 … base+(num_runs−1).
/// A numerically diverged run is recorded as failed (with its error) and
/// excluded from the mean; any other failure propagates.
inline MetricsRecord benchmark_dataset(const GraphDataset& data, ModelKind model,
                                       TrainConfig base, int num_runs) {
  if (num_runs < 1) throw ConfigError("benchmark: num_runs must be >= 1");
  base.model = model;
  MetricsRecord record;
  std::vector<double> accs;
  for (int r = 0; r < num_runs; ++r) {
    TrainConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(r);
    RunMetrics run;
    run.run_index = r;
    run.seed = cfg.seed;
    try {
      FitResult fitted = fit(data, cfg);
      run.test_acc = evaluate(fitted.params, data, data.splits.test);
      run.best_epoch = fitted.best_epoch;
      run.epochs_completed = static_cast<int>(fitted.epochs.size());
      record.traces.push_back(std::move(fitted.epochs));
      accs.push_back(run.test_acc);
    } catch (const NumericError& e) {
      run.failed = true;
      run.error = e.what();
      ++record.failed_runs;
      record.traces.emplace_back();
    }
    record.runs.push_back(std::move(run));
  }
  const auto [mean, sd] = mean_std(accs);
  record.mean_test_acc = mean;
  record.std_test_acc = sd;
  return record;
}

/// Write a file through a temp-and-rename so partial output never lands
/// at the final path.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out.good()) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string epochs_jsonl(const MetricsRecord& record) {
  std::string out;
  for (std::size_t r = 0; r < record.traces.size(); ++r) {
    for (const EpochRecord& e : record.traces[r]) {
      nlohmann::ordered_json line = {{"run", static_cast<int>(r)},
                                     {"epoch", e.epoch},
                                     {"l_pred", e.l_pred},
                                     {"l_graph", e.l_graph},
                                     {"train_acc", e.train_acc},
                                     {"val_acc", e.val_acc},
                                     {"wall_ms", e.wall_ms}};
      out += line.dump();
      out += '\n';
    }
  }
  return out;
}

inline std::string metrics_json(const ExperimentConfig& cfg, const MetricsRecord& record) {
  nlohmann::ordered_json j;
  j["model"] = model_kind_name(cfg.model);
  j["num_runs"] = cfg.num_runs;
  j["mean_test_acc"] = record.mean_test_acc;
  j["std_test_acc"] = record.std_test_acc;
  j["failed_runs"] = record.failed_runs;
  if (record.failed_runs > 0)
    j["warning"] = "mean/std cover completed runs only";
  j["runs"] = nlohmann::ordered_json::array();
  for (const RunMetrics& run : record.runs) {
    nlohmann::ordered_json r = {{"run", run.run_index},
                                {"seed", run.seed},
                                {"failed", run.failed},
                                {"test_acc", run.test_acc},
                                {"best_epoch", run.best_epoch},
                                {"epochs_completed", run.epochs_completed}};
    if (run.failed) r["error"] = run.error;
    j["runs"].push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

/// Full benchmark: materialize the data source, run the seeded fits, and
/// persist metrics.json + epochs.jsonl under the output directory.
inline MetricsRecord run_benchmark(const ExperimentConfig& cfg) {
  const GraphDataset data = materialize_dataset(cfg);
  MetricsRecord record = benchmark_dataset(data, cfg.model, cfg.train, cfg.num_runs);
  const std::filesystem::path out(cfg.output_dir);
  write_atomic(out / "metrics.json", metrics_json(cfg, record));
  write_atomic(out / "epochs.jsonl", epochs_jsonl(record));
  return record;
}

inline std::string robustness_csv(const std::vector<RobustnessRow>& rows) {
  std::string out = "mode,ratio,model,mean,std\n";
  for (const auto& r : rows)
    out += r.mode + "," + detail::format_real(r.ratio) + "," + r.model + "," +
           detail::format_real(r.mean) + "," + detail::format_real(r.std_dev) + "\n";
  return out;
}

/// Accuracy sweep over perturbation modes × ratios × model variants on a
/// shared base dataset; matched training seeds across cells. Writes
/// robustness.csv.
inline std::vector<RobustnessRow> run_robustness(const ExperimentConfig& cfg,
                                                 const std::vector<double>& ratios,
                                                 const std::vector<NoiseMode>& modes,
                                                 const std::vector<ModelKind>& models) {
  const GraphDataset base = materialize_dataset(cfg);
  std::vector<RobustnessRow> rows;
  std::uint64_t cell = 0;
  for (NoiseMode mode : modes) {
    for (double ratio : ratios) {
      NoiseSpec spec;
      spec.mode = mode;
      spec.ratio = ratio;
      spec.seed = derive_seed(cfg.train.seed, 0x6015e + cell++);
      const GraphDataset perturbed =
          ratio > 0.0 ? perturb_edges(base, spec) : base;
      for (ModelKind model : models) {
        const MetricsRecord record =
            benchmark_dataset(perturbed, model, cfg.train, cfg.num_runs);
        RobustnessRow row;
        row.mode = mode == NoiseMode::add ? "add" : "remove";
        row.ratio = ratio;
        row.model = model_kind_name(model);
        row.mean = record.mean_test_acc;
        row.std_dev = record.std_test_acc;
        rows.push_back(std::move(row));
      }
    }
  }
  write_atomic(std::filesystem::path(cfg.output_dir) / "robustness.csv",
               robustness_csv(rows));
  return rows;
}

inline constexpr long long kHomophilyPairCap = 1'000'000;

inline std::string homophily_csv(const std::vector<HomophilyRow>& rows) {
  std::string out = "bin_low,bin_high,pair_count,same_label_ratio\n";
  for (const auto& r : rows) {
    out += detail::format_real(r.bin_low) + "," + detail::format_real(r.bin_high) + "," +
           std::to_string(r.pair_count) + ",";
    if (r.has_ratio) out += detail::format_real(r.same_label_ratio);
    out += "\n";
  }
  return out;
}

/// Same-label ratio of test-node pairs per refined-probability interval.
/// Pairs are scored with the symmetrized node-node P̂ defined by the
/// model's embedding (anchor-trained models included); above the cap, a
/// seeded uniform pair sample is used instead of full enumeration.
inline std::vector<HomophilyRow> run_homophily(const ModelParams& params,
                                               const GraphDataset& data, int num_bins,
                                               std::uint64_t pair_seed = 0) {
  if (num_bins < 1) throw ConfigError("homophily: num_bins must be >= 1");
  if (!params.embedding)
    throw ConfigError("homophily: model has no probability learner");
  if (data.splits.test.empty()) throw ConfigError("homophily: test split is empty");

  const ModelContext ctx = make_context(data);
  const Matrix z = embed(*params.embedding, data.features, &ctx.observed_row);
  const ProbabilityMatrix refined = probability_passing(
      ctx.observed_row, pairwise_probabilities(z, params.embedding->temperature()));

  const auto& test = data.splits.test;
  const auto m = static_cast<long long>(test.size());
  std::vector<long long> count(static_cast<std::size_t>(num_bins), 0);
  std::vector<long long> same(static_cast<std::size_t>(num_bins), 0);
  auto tally = [&](Index a, Index b) {
    const double score = 0.5 * (refined.scores(a, b) + refined.scores(b, a));
    auto bin = static_cast<long long>(
        std::ceil(score * static_cast<double>(num_bins))) - 1;
    bin = std::clamp<long long>(bin, 0, num_bins - 1);
    ++count[static_cast<std::size_t>(bin)];
    if (data.labels[static_cast<std::size_t>(a)] ==
        data.labels[static_cast<std::size_t>(b)])
      ++same[static_cast<std::size_t>(bin)];
  };

  const long long total_pairs = m * (m - 1) / 2;
  if (total_pairs <= kHomophilyPairCap) {
    for (long long x = 0; x < m; ++x)
      for (long long y = x + 1; y < m; ++y)
        tally(test[static_cast<std::size_t>(x)], test[static_cast<std::size_t>(y)]);
  } else {
    Rng rng(pair_seed);
    long long drawn = 0;
    while (drawn < kHomophilyPairCap) {
      const auto x = rng.uniform_below(static_cast<std::uint64_t>(m));
      const auto y = rng.uniform_below(static_cast<std::uint64_t>(m));
      if (x == y) continue;
      tally(test[static_cast<std::size_t>(x)], test[static_cast<std::size_t>(y)]);
      ++drawn;
    }
  }

  std::vector<HomophilyRow> rows;
  for (int b = 0; b < num_bins; ++b) {
    HomophilyRow row;
    row.bin_low = static_cast<double>(b) / num_bins;
    row.bin_high = static_cast<double>(b + 1) / num_bins;
    row.pair_count = count[static_cast<std::size_t>(b)];
    row.has_ratio = row.pair_count > 0;
    if (row.has_ratio)
      row.same_label_ratio = static_cast<double>(same[static_cast<std::size_t>(b)]) /
                             static_cast<double>(row.pair_count);
    rows.push_back(row);
  }
  return rows;
}

struct ScalingRow {
  Index n = 0;
  bool node_oom = false;
  double node_ms = 0.0;
  double anchor_ms = 0.0;
};

inline std::string scaling_csv(const std::vector<ScalingRow>& rows) {
  std::string out = "n,node_node_ms,anchor_ms\n";
  for (const auto& r : rows) {
    out += std::to_string(r.n) + ",";
    out += r.node_oom ? "OOM" : detail::format_real(r.node_ms);
    out += "," + detail::format_real(r.anchor_ms) + "\n";
  }
  return out;
}

/// Wall time of the graph-structure-learning stage (embed → kernel →
/// probability passing → top-k sampling) at increasing node counts, for
/// both the node-node and anchor variants. Median of `reps` repetitions;
/// memory exhaustion in the quadratic variant marks the cell OOM.
inline std::vector<ScalingRow> run_scaling(const std::vector<Index>& sizes, Index s,
                                           Index k, int reps = 5,
                                           std::uint64_t seed = 17) {
  if (sizes.empty()) throw ConfigError("scaling: no sizes given");
  if (!std::is_sorted(sizes.begin(), sizes.end()))
    throw ConfigError("scaling: sizes must be ascending");
  if (reps < 1) throw ConfigError("scaling: reps must be >= 1");

  std::vector<ScalingRow> rows;
  for (Index n : sizes) {
    // Constant expected degrees so ‖A⁰‖ grows linearly with N.
    const double p_in = std::min(1.0, 24.0 / static_cast<double>(n));
    const double p_out = std::min(1.0, 8.0 / 3.0 / static_cast<double>(n));
    const GraphDataset data =
        generate_sbm(n, 4, p_in, p_out, 16, 0.1, derive_seed(seed, static_cast<std::uint64_t>(n)));
    const NormalizedOperator op =
        degree_normalize(data.adjacency, Normalization::row_stochastic, true);
    EmbeddingConfig ec;
    ec.in_dim = data.feat_dim();
    const EmbeddingNet net = EmbeddingNet::initialized(ec, derive_seed(seed, 1));
    const AnchorSet anchors =
        sample_anchors(n, std::min(s, n), derive_seed(seed, 2));

    ScalingRow row;
    row.n = n;
    std::vector<double> node_times, anchor_times;
    for (int rep = 0; rep < reps; ++rep) {
      const std::uint64_t rep_seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(rep));
      try {
        const auto t0 = std::chrono::steady_clock::now();
        const Matrix z = embed(net, data.features);
        const ProbabilityMatrix p = pairwise_probabilities(z, net.temperature());
        const ProbabilityMatrix refined = probability_passing(op, p);
        gumbel_top_k(refined, k, SampleMode::stochastic, rep_seed);
        node_times.push_back(std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count());
      } catch (const std::bad_alloc&) {
        row.node_oom = true;
      }
      {
        const auto t0 = std::chrono::steady_clock::now();
        const Matrix z = embed(net, data.features);
        const ProbabilityMatrix r = node_anchor_probabilities(z, anchors, net.temperature());
        const ProbabilityMatrix refined = anchor_probability_passing(op, r);
        gumbel_top_k(refined, std::min(k, anchors.size()), SampleMode::stochastic, rep_seed);
        anchor_times.push_back(std::chrono::duration<double, std::milli>(
                                   std::chrono::steady_clock::now() - t0)
                                   .count());
      }
    }
    auto median = [](std::vector<double>& v) {
      std::sort(v.begin(), v.end());
      return v[v.size() / 2];
    };
    if (!node_times.empty() && !row.node_oom) row.node_ms = median(node_times);
    row.anchor_ms = median(anchor_times);
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Least-squares slope of log(y) against log(x).
inline double log_log_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw ConfigError("log_log_slope: need at least two matched points");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0 && ys[i] > 0.0))
      throw ConfigError("log_log_slope: values must be positive");
    lx.push_back(std::log(xs[i]));
    ly.push_back(std::log(ys[i]));
  }
  const auto [mx, sx] = mean_std(lx);
  const auto [my, sy] = mean_std(ly);
  (void)sy;
  double cov = 0.0, var = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    cov += (lx[i] - mx) * (ly[i] - my);
    var += (lx[i] - mx) * (lx[i] - mx);
  }
  if (var == 0.0) throw ConfigError("log_log_slope: x values are all equal");
  return cov / var;
}

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = shared;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

/// Spearman rank correlation with average ranks for ties.
inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ConfigError("spearman_rho: need at least two matched points");
  const auto rx = detail::average_ranks(x);
  const auto ry = detail::average_ranks(y);
  const auto [mx, sx] = mean_std(rx);
  const auto [my, sy] = mean_std(ry);
  if (sx == 0.0 || sy == 0.0) return 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) cov += (rx[i] - mx) * (ry[i] - my);
  cov /= static_cast<double>(rx.size());
  return cov / (sx * sy);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (start <= line.size()) {
    const std::size_t comma = line.find(',', start);
    const std::size_t end = (comma == std::string::npos) ? line.size() : comma;
    std::string field = line.substr(start, end - start);
    if (!field.empty() && field.back() == '\r') field.pop_back();
    fields.push_back(std::move(field));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace detail

inline std::vector<RobustnessRow> read_robustness_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      detail::split_csv_line(line) !=
          std::vector<std::string>{"mode", "ratio", "model", "mean", "std"})
    throw DataError(path.string() + ": expected header mode,ratio,model,mean,std");
  std::vector<RobustnessRow> rows;
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank_line(line)) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 5)
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 5 fields");
    RobustnessRow row;
    row.mode = fields[0];
    row.ratio = detail::parse_real(fields[1], path.string(), lineno);
    row.model = fields[2];
    row.mean = detail::parse_real(fields[3], path.string(), lineno);
    row.std_dev = detail::parse_real(fields[4], path.string(), lineno);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<HomophilyRow> read_homophily_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) ||
      detail::split_csv_line(line) !=
          std::vector<std::string>{"bin_low", "bin_high", "pair_count",
                                   "same_label_ratio"})
    throw DataError(path.string() +
                    ": expected header bin_low,bin_high,pair_count,same_label_ratio");
  std::vector<HomophilyRow> rows;
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::blank_line(line)) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 4)
      throw DataError(path.string() + ":" + std::to_string(lineno) +
                      ": expected 4 fields");
    HomophilyRow row;
    row.bin_low = detail::parse_real(fields[0], path.string(), lineno);
    row.bin_high = detail::parse_real(fields[1], path.string(), lineno);
    row.pair_count = detail::parse_int(fields[2], path.string(), lineno);
    row.has_ratio = !fields[3].empty();
    if (row.has_ratio)
      row.same_label_ratio = detail::parse_real(fields[3], path.string(), lineno);
    rows.push_back(row);
  }
  return rows;
}

/// Render whatever tables exist in the output directory into standalone
/// SVG documents. Returns the files written.
inline std::vector<std::filesystem::path> export_plots(
    const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<fs::path> written;
  if (fs::exists(dir / "robustness.csv")) {
    write_atomic(dir / "robustness.svg",
                 render_robustness_svg(read_robustness_csv(dir / "robustness.csv")));
    written.push_back(dir / "robustness.svg");
  }
  if (fs::exists(dir / "homophily.csv")) {
    write_atomic(dir / "homophily.svg",
                 render_homophily_svg(read_homophily_csv(dir / "homophily.csv")));
    written.push_back(dir / "homophily.svg");
  }
  if (written.empty())
    throw DataError("plot: no robustness.csv or homophily.csv under " + dir.string());
  return written;
}

}  // namespace ppgnn
