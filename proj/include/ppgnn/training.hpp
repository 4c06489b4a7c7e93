#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ppgnn/csr.hpp"
#include "ppgnn/dataset.hpp"
#include "ppgnn/error.hpp"
#include "ppgnn/graph_learner.hpp"
#include "ppgnn/message_passing.hpp"

namespace ppgnn {

enum class ModelKind { ppgnn, ppgnn_anchor, gcn_baseline, mlp_baseline };

inline bool is_latent_graph_model(ModelKind m) {
  return m == ModelKind::ppgnn || m == ModelKind::ppgnn_anchor;
}

struct TrainConfig {
  ModelKind model = ModelKind::ppgnn;
  double learning_rate = 5e-3;
  int max_epochs = 300;
  int patience = 50;
  Index k = 4;
  Index num_anchors = 0;  // 0 → ⌈0.1·N⌉ in anchor mode
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double dropout = 0.0;
  Index embed_hidden = 64;
  Index embed_out = 32;
  bool embed_graph_conv = false;
  Index gcn_hidden = 64;
  int gcn_layers = 3;
  /// When false, epoch records carry wall_ms = 0 so logs are
  /// byte-reproducible across runs.
  bool record_timing = false;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
    if (max_epochs < 0) throw ConfigError("TrainConfig: max_epochs must be >= 0");
    if (patience < 1) throw ConfigError("TrainConfig: patience must be >= 1");
    if (k < 1) throw ConfigError("TrainConfig: k must be >= 1");
    if (num_anchors < 0) throw ConfigError("TrainConfig: num_anchors must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("TrainConfig: moment decays must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("TrainConfig: adam_eps must be > 0");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("TrainConfig: dropout must lie in [0, 1)");
    if (embed_hidden < 1 || embed_out < 1 || gcn_hidden < 1 || gcn_layers < 1)
      throw ConfigError("TrainConfig: layer widths and counts must be positive");
  }
};

/// δ_i = E(c) − c_i over the evaluated set, where c_i indicates a correct
/// hard prediction. Mean-centred by construction: Σδ = 0.
struct RewardVector {
  std::vector<double> delta;  // aligned with the eval set's order
  double mean_correct = 0.0;
};

inline RewardVector reward(const std::vector<int>& labels,
                           const std::vector<int>& predictions,
                           const std::vector<Index>& eval_set) {
  if (eval_set.empty()) throw ConfigError("reward: eval set is empty");
  RewardVector r;
  r.delta.resize(eval_set.size());
  double correct = 0.0;
  for (std::size_t t = 0; t < eval_set.size(); ++t) {
    const auto i = static_cast<std::size_t>(eval_set[t]);
    r.delta[t] = labels[i] == predictions[i] ? 1.0 : 0.0;
    correct += r.delta[t];
  }
  r.mean_correct = correct / static_cast<double>(eval_set.size());
  for (double& d : r.delta) d = r.mean_correct - d;
  return r;
}

struct LossBreakdown {
  double l_pred = 0.0;
  double l_graph = 0.0;
  double total = 0.0;
};

/// Softmax cross-entropy averaged over the given nodes, with max-shifted
/// log-sum-exp. Optionally emits dL/dlogits (zero outside the set).
inline double prediction_loss(const Matrix& logits, const std::vector<int>& labels,
                              const std::vector<Index>& train_set,
                              Matrix* d_logits = nullptr) {
  if (train_set.empty()) throw ConfigError("prediction_loss: train set is empty");
  if (!logits.allFinite()) throw NumericError("prediction_loss: non-finite logits");
  if (d_logits) *d_logits = Matrix::Zero(logits.rows(), logits.cols());
  const double inv_count = 1.0 / static_cast<double>(train_set.size());
  double loss = 0.0;
  for (Index i : train_set) {
    const auto row = logits.row(i);
    const double shift = row.maxCoeff();
    const double lse = shift + std::log((row.array() - shift).exp().sum());
    const int y = labels[static_cast<std::size_t>(i)];
    loss += lse - row(y);
    if (d_logits) {
      d_logits->row(i) = (row.array() - lse).exp().matrix() * inv_count;
      (*d_logits)(i, y) -= inv_count;
    }
  }
  return loss * inv_count;
}

/// L_G = Σ_{i∈set} δ_i Σ_{j∈A⁽*⁾ row i} log ŝ_ij, scores clamped at 1e-12.
/// δ is a constant; gradients reach Φ and t only through ŝ.
inline double graph_loss(const RewardVector& delta, const ProbabilityMatrix& scores,
                         const LatentGraph& a_star, const std::vector<Index>& eval_set) {
  if (!scores.refined) throw ConfigError("graph_loss: scores must be refined");
  if (a_star.structure.num_cols != scores.cols() ||
      a_star.structure.num_rows != scores.rows())
    throw ConfigError("graph_loss: sampled structure does not match score shape");
  if (delta.delta.size() != eval_set.size())
    throw ConfigError("graph_loss: reward size does not match eval set");
  double loss = 0.0;
  for (std::size_t t = 0; t < eval_set.size(); ++t) {
    const Index i = eval_set[t];
    double row_sum = 0.0;
    for (Index j : a_star.structure.row(i))
      row_sum += std::log(std::max(scores.scores(i, j), kLogClamp));
    loss += delta.delta[t] * row_sum;
  }
  return loss;
}

/// All learnable state for one model variant. Self-contained for forward
/// passes: the sampled anchor set and per-row edge budget k live here.
struct ModelParams {
  ModelKind model = ModelKind::ppgnn;
  Index k = 4;
  std::optional<EmbeddingNet> embedding;
  std::optional<AnchorSet> anchors;
  GcnStack gcn;
  ClassifierHead head;
};

/// Precomputed dataset-side operators shared by every forward pass.
struct ModelContext {
  const GraphDataset* data = nullptr;
  NormalizedOperator observed_row;  // D⁻¹(A⁽⁰⁾+I), probability passing
  NormalizedOperator observed_sym;  // D^{-1/2}(A⁽⁰⁾+I)D^{-1/2}, GCN baseline
};

inline ModelContext make_context(const GraphDataset& data) {
  ModelContext ctx;
  ctx.data = &data;
  ctx.observed_row = degree_normalize(data.adjacency, Normalization::row_stochastic, true);
  ctx.observed_sym = degree_normalize(data.adjacency, Normalization::symmetric, true);
  return ctx;
}

inline ModelParams initialize_model(const GraphDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  ModelParams params;
  params.model = cfg.model;
  params.k = cfg.k;
  const Index n = data.num_nodes();
  if (is_latent_graph_model(cfg.model)) {
    EmbeddingConfig ec;
    ec.in_dim = data.feat_dim();
    ec.hidden_dim = cfg.embed_hidden;
    ec.out_dim = cfg.embed_out;
    ec.graph_conv_first_layer = cfg.embed_graph_conv;
    params.embedding = EmbeddingNet::initialized(ec, derive_seed(cfg.seed, 1));
    if (cfg.model == ModelKind::ppgnn_anchor) {
      Index s = cfg.num_anchors;
      if (s == 0) s = std::max<Index>(1, (n + 9) / 10);
      if (s > n) throw ConfigError("initialize_model: more anchors than nodes");
      if (cfg.k > s)
        throw ConfigError("initialize_model: k = " + std::to_string(cfg.k) +
                          " exceeds anchor count " + std::to_string(s));
      params.anchors = sample_anchors(n, s, derive_seed(cfg.seed, 2));
    } else if (cfg.k > n) {
      throw ConfigError("initialize_model: k exceeds node count");
    }
  }
  GcnConfig gc;
  gc.in_dim = data.feat_dim();
  gc.hidden_dim = cfg.gcn_hidden;
  gc.num_layers = cfg.gcn_layers;
  gc.dropout = cfg.dropout;
  params.gcn = GcnStack::initialized(gc, derive_seed(cfg.seed, 3));
  params.head = ClassifierHead::initialized(cfg.gcn_hidden, data.num_classes,
                                            derive_seed(cfg.seed, 4));
  return params;
}

/// Same shapes as `params`, all tensors zeroed — a gradient container.
inline ModelParams zero_like(const ModelParams& params) {
  ModelParams z = params;
  if (z.embedding) {
    z.embedding->w1.setZero();
    z.embedding->b1.setZero();
    z.embedding->w2.setZero();
    z.embedding->b2.setZero();
    z.embedding->temperature_raw = 0.0;
  }
  for (auto& w : z.gcn.weights) w.setZero();
  for (auto& b : z.gcn.biases) b.setZero();
  z.head.w.setZero();
  z.head.b.setZero();
  return z;
}

/// Flat view of one parameter tensor; the registry below fixes the order
/// shared by the optimizer and the finite-difference checker.
struct TensorRef {
  double* data = nullptr;
  std::size_t size = 0;
};

inline std::vector<TensorRef> parameter_refs(ModelParams& params) {
  std::vector<TensorRef> refs;
  auto add = [&refs](double* p, std::size_t n) { refs.push_back({p, n}); };
  if (params.embedding) {
    auto& e = *params.embedding;
    add(e.w1.data(), static_cast<std::size_t>(e.w1.size()));
    add(e.b1.data(), static_cast<std::size_t>(e.b1.size()));
    add(e.w2.data(), static_cast<std::size_t>(e.w2.size()));
    add(e.b2.data(), static_cast<std::size_t>(e.b2.size()));
    add(&e.temperature_raw, 1);
  }
  for (auto& w : params.gcn.weights) add(w.data(), static_cast<std::size_t>(w.size()));
  for (auto& b : params.gcn.biases) add(b.data(), static_cast<std::size_t>(b.size()));
  add(params.head.w.data(), static_cast<std::size_t>(params.head.w.size()));
  add(params.head.b.data(), static_cast<std::size_t>(params.head.b.size()));
  return refs;
}

/// Everything one training step records on the way forward.
struct ForwardResult {
  EmbedCache embed_cache;
  ProbabilityMatrix raw;      // P or R, unrefined
  ProbabilityMatrix refined;  // P̂ or R̂
  LatentGraph a_star;
  Propagation propagation;
  GcnCache gcn_cache;
  Matrix u_final;
  Matrix logits;
};

/// One full forward pass. For latent-graph models: embed → kernel scores →
/// probability passing → top-k sampling → message passing → head. Passing
/// `frozen` reuses a previously sampled structure (finite-difference
/// checks perturb parameters under a fixed A⁽*⁾).
inline ForwardResult model_forward(const ModelParams& params, const ModelContext& ctx,
                                   SampleMode mode, std::uint64_t step_seed,
                                   bool training = false,
                                   const LatentGraph* frozen = nullptr) {
  const GraphDataset& data = *ctx.data;
  ForwardResult fwd;
  if (is_latent_graph_model(params.model)) {
    const EmbeddingNet& net = *params.embedding;
    const Matrix z = embed(net, data.features, &ctx.observed_row, &fwd.embed_cache);
    const double t = net.temperature();
    if (params.model == ModelKind::ppgnn) {
      fwd.raw = pairwise_probabilities(z, t);
      fwd.refined = probability_passing(ctx.observed_row, fwd.raw);
    } else {
      fwd.raw = node_anchor_probabilities(z, *params.anchors, t);
      fwd.refined = anchor_probability_passing(ctx.observed_row, fwd.raw);
    }
    fwd.a_star = frozen ? *frozen
                        : gumbel_top_k(fwd.refined, params.k, mode,
                                       derive_seed(step_seed, 0xa57a));
    fwd.propagation = params.model == ModelKind::ppgnn
                          ? Propagation::from_operator(
                                build_gcn_operator(fwd.a_star.structure))
                          : Propagation::from_bipartite(fwd.a_star);
  } else if (params.model == ModelKind::gcn_baseline) {
    fwd.propagation = Propagation::from_operator(ctx.observed_sym);
  } else {
    fwd.propagation = Propagation::identity();
  }
  fwd.u_final = gcn_forward(params.gcn, fwd.propagation, data.features, &fwd.gcn_cache,
                            training, derive_seed(step_seed, 0xd09));
  fwd.logits = classify(params.head, fwd.u_final);
  return fwd;
}

inline LossBreakdown compute_losses(const ModelParams& params, const ForwardResult& fwd,
                                    const std::vector<int>& labels,
                                    const std::vector<Index>& train_set,
                                    const RewardVector& delta) {
  LossBreakdown loss;
  loss.l_pred = prediction_loss(fwd.logits, labels, train_set);
  if (is_latent_graph_model(params.model))
    loss.l_graph = graph_loss(delta, fwd.refined, fwd.a_star, train_set);
  loss.total = loss.l_pred + loss.l_graph;
  return loss;
}

namespace detail {

/// Backward through kernel scores and the embedding net, given
/// dL_G/dP(a,b) = q for raw kernel entries P(a,b) = exp(−‖z_a−z_b‖²/t).
/// Entries arrive as triplets; b indexes anchors in node-anchor mode.
struct KernelGradAccumulator {
  const Matrix& z;
  double t;
  const AnchorSet* anchors;  // null in node-node mode
  Matrix d_z;
  double d_t = 0.0;

  KernelGradAccumulator(const Matrix& z_in, double t_in, const AnchorSet* anchors_in)
      : z(z_in), t(t_in), anchors(anchors_in),
        d_z(Matrix::Zero(z_in.rows(), z_in.cols())) {}

  void add(Index a, Index b, double q, double p) {
    if (p <= kProbFloor) return;  // clamped entries have zero gradient
    const Index other = anchors ? anchors->indices[static_cast<std::size_t>(b)] : b;
    const auto diff = (z.row(a) - z.row(other)).eval();
    const double d2 = diff.squaredNorm();
    const double scale = q * p;
    d_z.row(a) += scale * (-2.0 / t) * diff;
    d_z.row(other) -= scale * (-2.0 / t) * diff;
    d_t += scale * d2 / (t * t);
  }
};

inline void embed_backward(const EmbeddingNet& net, const EmbedCache& cache,
                           const Matrix& d_z, EmbeddingNet& grads) {
  grads.w2 += cache.pre1.cwiseMax(0.0).transpose() * d_z;
  grads.b2 += d_z.colwise().sum();
  const Matrix d_h1 = (d_z * net.w2.transpose())
                          .cwiseProduct((cache.pre1.array() > 0.0).cast<double>().matrix());
  grads.w1 += cache.input.transpose() * d_h1;
  grads.b1 += d_h1.colwise().sum();
}

}  // namespace detail

/// Exact analytic gradients of L = L_pred + L_G. Routing is exact by
/// construction: the stack and head see only L_pred (A⁽*⁾ enters the GNN
/// unweighted, so no path reaches the scores), while Φ and τ see only L_G
/// (sampling is non-differentiable and δ is a constant).
inline ModelParams model_backward(const ModelParams& params, const ModelContext& ctx,
                                  const ForwardResult& fwd,
                                  const std::vector<Index>& train_set,
                                  const RewardVector& delta) {
  const GraphDataset& data = *ctx.data;
  ModelParams grads = zero_like(params);

  // L_pred → head → stack.
  Matrix d_logits;
  prediction_loss(fwd.logits, data.labels, train_set, &d_logits);
  grads.head.w = fwd.u_final.transpose() * d_logits;
  grads.head.b = d_logits.colwise().sum();
  const Matrix d_u = d_logits * params.head.w.transpose();
  gcn_backward(params.gcn, fwd.propagation, fwd.gcn_cache, d_u, grads.gcn.weights,
               grads.gcn.biases);

  // L_G → refined scores → raw kernel → embedding and temperature.
  if (is_latent_graph_model(params.model)) {
    const EmbeddingNet& net = *params.embedding;
    const double t = net.temperature();
    const AnchorSet* anchors =
        params.model == ModelKind::ppgnn_anchor ? &*params.anchors : nullptr;
    detail::KernelGradAccumulator kernel(fwd.embed_cache.z, t, anchors);

    // dL_G/dŝ_ij = δ_i/ŝ_ij on sampled train-row edges; pushing through
    // ŝ = D⁻¹A⁽⁰⁾P gives dP(a,j) = Σ_i op(i,a)·dŝ(i,j), expanded here
    // triplet by triplet (the train rows × neighborhood × k entries are
    // few, so no dense N×N gradient is materialized).
    const SparseAdjacency& op = ctx.observed_row.base;
    for (std::size_t ti = 0; ti < train_set.size(); ++ti) {
      const Index i = train_set[ti];
      const double d_i = delta.delta[ti];
      if (d_i == 0.0) continue;
      const auto neighbors = op.row(i);
      const auto weights = op.row_values(i);
      for (Index j : fwd.a_star.structure.row(i)) {
        const double s_hat = fwd.refined.scores(i, j);
        if (s_hat <= kLogClamp) continue;  // log-clamp zone: zero gradient
        const double d_s = d_i / s_hat;
        for (std::size_t e = 0; e < neighbors.size(); ++e)
          kernel.add(neighbors[e], j, weights[e] * d_s, fwd.raw.scores(neighbors[e], j));
      }
    }

    detail::embed_backward(net, fwd.embed_cache, kernel.d_z, *grads.embedding);
    grads.embedding->temperature_raw = kernel.d_t * sigmoid(net.temperature_raw);
  }
  return grads;
}

/// Bias-corrected adaptive-moment update (β₁, β₂, ε from the config).
struct AdamState {
  long long step = 0;
  std::vector<std::vector<double>> m, v;

  static AdamState for_params(ModelParams& params) {
    AdamState state;
    for (const TensorRef& ref : parameter_refs(params)) {
      state.m.emplace_back(ref.size, 0.0);
      state.v.emplace_back(ref.size, 0.0);
    }
    return state;
  }
};

inline void adam_step(ModelParams& params, ModelParams& grads, AdamState& state,
                      const TrainConfig& cfg) {
  const auto p_refs = parameter_refs(params);
  const auto g_refs = parameter_refs(grads);
  if (p_refs.size() != g_refs.size() || p_refs.size() != state.m.size())
    throw ConfigError("adam_step: parameter/gradient registries disagree");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t r = 0; r < p_refs.size(); ++r) {
    if (p_refs[r].size != g_refs[r].size)
      throw ConfigError("adam_step: tensor shapes disagree");
    auto& m = state.m[r];
    auto& v = state.v[r];
    for (std::size_t i = 0; i < p_refs[r].size; ++i) {
      const double g = g_refs[r].data[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      p_refs[r].data[i] -=
          cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
    }
  }
}

struct EpochRecord {
  int epoch = 0;
  double l_pred = 0.0;
  double l_graph = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double wall_ms = 0.0;
};

struct FitResult {
  ModelParams params;  // snapshot at the best validation epoch
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_acc = 0.0;
};

inline double accuracy_on(const std::vector<int>& labels,
                          const std::vector<int>& predictions,
                          const std::vector<Index>& split) {
  if (split.empty()) throw ConfigError("accuracy: empty split");
  double correct = 0.0;
  for (Index i : split)
    if (labels[static_cast<std::size_t>(i)] == predictions[static_cast<std::size_t>(i)])
      correct += 1.0;
  return correct / static_cast<double>(split.size());
}

/// Fraction of split nodes classified correctly under the deterministic
/// latent graph.
inline double evaluate(const ModelParams& params, const ModelContext& ctx,
                       const std::vector<Index>& split) {
  const ForwardResult fwd = model_forward(params, ctx, SampleMode::deterministic, 0);
  return accuracy_on(ctx.data->labels, predict_labels(fwd.logits), split);
}

inline double evaluate(const ModelParams& params, const GraphDataset& data,
                       const std::vector<Index>& split) {
  const ModelContext ctx = make_context(data);
  return evaluate(params, ctx, split);
}

/// Joint training loop: stochastic forward, L = L_pred + L_G, reward from
/// the step's own train predictions, adaptive-moment update, then a
/// deterministic evaluation pass. Early-stops on best validation accuracy
/// and returns the parameters from that epoch.
inline FitResult fit(const GraphDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.splits.train.empty()) throw ConfigError("fit: train split is empty");
  if (data.splits.val.empty()) throw ConfigError("fit: val split is empty");
  const ModelContext ctx = make_context(data);

  FitResult result;
  result.params = initialize_model(data, cfg);
  ModelParams params = result.params;
  AdamState adam = AdamState::for_params(params);
  const std::uint64_t epoch_ns = derive_seed(cfg.seed, 0xe90c);

  double best_val = -1.0;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const std::uint64_t step_seed = derive_seed(epoch_ns, static_cast<std::uint64_t>(epoch));

    const ForwardResult fwd =
        model_forward(params, ctx, SampleMode::stochastic, step_seed, true);
    const RewardVector delta =
        reward(data.labels, predict_labels(fwd.logits), data.splits.train);
    const LossBreakdown loss =
        compute_losses(params, fwd, data.labels, data.splits.train, delta);
    if (!std::isfinite(loss.total))
      throw NumericError("fit: loss diverged at epoch " + std::to_string(epoch));

    ModelParams grads = model_backward(params, ctx, fwd, data.splits.train, delta);
    adam_step(params, grads, adam, cfg);

    const ForwardResult eval_fwd =
        model_forward(params, ctx, SampleMode::deterministic, 0);
    const auto eval_predictions = predict_labels(eval_fwd.logits);

    EpochRecord record;
    record.epoch = epoch;
    record.l_pred = loss.l_pred;
    record.l_graph = loss.l_graph;
    record.train_acc = accuracy_on(data.labels, eval_predictions, data.splits.train);
    record.val_acc = accuracy_on(data.labels, eval_predictions, data.splits.val);
    if (cfg.record_timing)
      record.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - started)
                           .count();
    result.epochs.push_back(record);

    if (record.val_acc > best_val) {
      best_val = record.val_acc;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.best_val_acc = std::max(best_val, 0.0);
  return result;
}

}  // namespace ppgnn
