#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ppgnn/csr.hpp"
#include "ppgnn/error.hpp"
#include "ppgnn/graph_learner.hpp"
#include "ppgnn/init.hpp"
#include "ppgnn/rng.hpp"

namespace ppgnn {

/// V = Λ⁻¹A⁽*⁾ᵀU: columnwise mean of the rows of nodes selecting each
/// anchor. Anchors selected by no node get a zero row.
inline Matrix anchor_aggregate(const Matrix& u, const LatentGraph& a_star) {
  const SparseAdjacency& a = a_star.structure;
  if (a.num_rows != u.rows())
    throw ConfigError("anchor_aggregate: structure has " + std::to_string(a.num_rows) +
                      " rows but features have " + std::to_string(u.rows()));
  Vector col_sums = Vector::Zero(a.num_cols);
  for (Index j : a.col_indices) col_sums[j] += 1.0;
  Matrix v = spmm_transpose(a, u);
  for (Index j = 0; j < a.num_cols; ++j)
    v.row(j) *= col_sums[j] > 0.0 ? 1.0 / col_sums[j] : 0.0;
  return v;
}

/// U = Δ⁻¹A⁽*⁾V: mean over each node's k selected anchors (Δ_ii = k).
inline Matrix anchor_broadcast(const Matrix& v, const LatentGraph& a_star) {
  const SparseAdjacency& a = a_star.structure;
  if (a.num_cols != v.rows())
    throw ConfigError("anchor_broadcast: structure has " + std::to_string(a.num_cols) +
                      " columns but anchor features have " + std::to_string(v.rows()));
  return spmm(a, v) / static_cast<double>(a_star.k);
}

/// One propagation step shared by all model variants: identity (plain
/// perceptron), a normalized sparse operator (GCN), or the two-step
/// node→anchor→node pass.
struct Propagation {
  enum class Kind { identity, sparse_operator, anchor_two_step };

  Kind kind = Kind::identity;
  std::optional<NormalizedOperator> op;
  std::optional<LatentGraph> bipartite;
  Vector inv_col_sums;  // Λ⁻¹ diagonal, 0 where an anchor is unselected

  static Propagation identity() { return {}; }

  static Propagation from_operator(NormalizedOperator normalized) {
    Propagation p;
    p.kind = Kind::sparse_operator;
    p.op = std::move(normalized);
    return p;
  }

  static Propagation from_bipartite(LatentGraph a_star) {
    Propagation p;
    p.kind = Kind::anchor_two_step;
    p.inv_col_sums = Vector::Zero(a_star.structure.num_cols);
    for (Index j : a_star.structure.col_indices) p.inv_col_sums[j] += 1.0;
    for (Index j = 0; j < p.inv_col_sums.size(); ++j)
      p.inv_col_sums[j] = p.inv_col_sums[j] > 0.0 ? 1.0 / p.inv_col_sums[j] : 0.0;
    p.bipartite = std::move(a_star);
    return p;
  }

  Matrix apply(const Matrix& u) const {
    switch (kind) {
      case Kind::identity:
        return u;
      case Kind::sparse_operator:
        return op->apply(u);
      case Kind::anchor_two_step:
        return anchor_broadcast(anchor_aggregate(u, *bipartite), *bipartite);
    }
    throw ConfigError("Propagation: unknown kind");
  }

  /// Transpose application, used when gradients flow back through the
  /// propagation. For the anchor pass Sᵀ = A Λ⁻¹ Aᵀ Δ⁻¹ (diagonals are
  /// symmetric).
  Matrix apply_transpose(const Matrix& g) const {
    switch (kind) {
      case Kind::identity:
        return g;
      case Kind::sparse_operator:
        return op->apply_transpose(g);
      case Kind::anchor_two_step: {
        const SparseAdjacency& a = bipartite->structure;
        Matrix t = spmm_transpose(a, g / static_cast<double>(bipartite->k));
        for (Index j = 0; j < a.num_cols; ++j) t.row(j) *= inv_col_sums[j];
        return spmm(a, t);
      }
    }
    throw ConfigError("Propagation: unknown kind");
  }
};

/// Symmetrically normalized operator over the sampled structure:
/// sym(A⁽*⁾) ∪ I with D^{-1/2}(A+I)D^{-1/2} weights.
inline NormalizedOperator build_gcn_operator(const SparseAdjacency& structure) {
  return degree_normalize(structure.symmetric_union(), Normalization::symmetric, true);
}

struct GcnConfig {
  Index in_dim = 0;
  Index hidden_dim = 64;
  int num_layers = 3;
  double dropout = 0.0;  // applied to each layer's input while training
};

/// L stacked graph-convolution layers with a rectifier after each.
struct GcnStack {
  GcnConfig config;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static GcnStack initialized(const GcnConfig& cfg, std::uint64_t seed) {
    if (cfg.in_dim <= 0 || cfg.hidden_dim <= 0 || cfg.num_layers < 1)
      throw ConfigError("GcnStack: dimensions and layer count must be positive");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
      throw ConfigError("GcnStack: dropout must lie in [0, 1)");
    GcnStack stack;
    stack.config = cfg;
    Rng rng(seed);
    Index width = cfg.in_dim;
    for (int l = 0; l < cfg.num_layers; ++l) {
      Matrix w(width, cfg.hidden_dim);
      glorot_fill(w, rng);
      stack.weights.push_back(std::move(w));
      stack.biases.push_back(Vector::Zero(cfg.hidden_dim));
      width = cfg.hidden_dim;
    }
    return stack;
  }
};

/// Per-layer intermediates recorded for the backward pass.
struct GcnCache {
  Matrix input;                       // U⁽⁰⁾ = X
  std::vector<Matrix> dropout_masks;  // empty when dropout is inactive
  std::vector<Matrix> propagated;     // prop(dropped U⁽ˡ⁻¹⁾)
  std::vector<Matrix> pre;            // propagated·W⁽ˡ⁾ + b⁽ˡ⁾
};

/// U⁽ˡ⁾ = rectify(prop(U⁽ˡ⁻¹⁾)·W⁽ˡ⁾ + b⁽ˡ⁾) for l = 1..L.
inline Matrix gcn_forward(const GcnStack& stack, const Propagation& prop,
                          const Matrix& x, GcnCache* cache = nullptr,
                          bool training = false, std::uint64_t dropout_seed = 0) {
  if (x.cols() != stack.config.in_dim)
    throw ConfigError("gcn_forward: input width " + std::to_string(x.cols()) +
                      " does not match stack input width " +
                      std::to_string(stack.config.in_dim));
  const double p = stack.config.dropout;
  const bool use_dropout = training && p > 0.0;
  if (cache) {
    cache->input = x;
    cache->dropout_masks.clear();
    cache->propagated.clear();
    cache->pre.clear();
  }
  Matrix u = x;
  for (std::size_t l = 0; l < stack.weights.size(); ++l) {
    if (use_dropout) {
      Rng rng(derive_seed(dropout_seed, static_cast<std::uint64_t>(l)));
      Matrix mask(u.rows(), u.cols());
      const double scale = 1.0 / (1.0 - p);
      for (Index i = 0; i < mask.rows(); ++i)
        for (Index j = 0; j < mask.cols(); ++j)
          mask(i, j) = rng.uniform01() < p ? 0.0 : scale;
      u = u.cwiseProduct(mask);
      if (cache) cache->dropout_masks.push_back(std::move(mask));
    }
    Matrix propagated = prop.apply(u);
    Matrix pre = (propagated * stack.weights[l]).rowwise() +
                 stack.biases[l].transpose();
    if (!pre.allFinite())
      throw NumericError("gcn_forward: non-finite activations at layer " +
                         std::to_string(l + 1));
    u = pre.cwiseMax(0.0);
    if (cache) {
      cache->propagated.push_back(std::move(propagated));
      cache->pre.push_back(std::move(pre));
    }
  }
  return u;
}

/// Gradients of the stack parameters given dL/dU⁽ᴸ⁾; returns dL/dX.
inline Matrix gcn_backward(const GcnStack& stack, const Propagation& prop,
                           const GcnCache& cache, const Matrix& d_output,
                           std::vector<Matrix>& d_weights,
                           std::vector<Vector>& d_biases) {
  const auto layers = stack.weights.size();
  d_weights.assign(layers, Matrix());
  d_biases.assign(layers, Vector());
  Matrix d_u = d_output;
  for (std::size_t l = layers; l-- > 0;) {
    const Matrix d_pre =
        d_u.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    d_weights[l] = cache.propagated[l].transpose() * d_pre;
    d_biases[l] = d_pre.colwise().sum();
    Matrix d_dropped = prop.apply_transpose(d_pre * stack.weights[l].transpose());
    if (!cache.dropout_masks.empty())
      d_dropped = d_dropped.cwiseProduct(cache.dropout_masks[l]);
    d_u = std::move(d_dropped);
  }
  return d_u;
}

/// Affine map from final node representations to class logits.
struct ClassifierHead {
  Matrix w;
  Vector b;

  static ClassifierHead initialized(Index in_dim, Index num_classes,
                                    std::uint64_t seed) {
    if (in_dim <= 0 || num_classes <= 0)
      throw ConfigError("ClassifierHead: dimensions must be positive");
    ClassifierHead head;
    head.w.resize(in_dim, num_classes);
    head.b = Vector::Zero(num_classes);
    Rng rng(seed);
    glorot_fill(head.w, rng);
    return head;
  }
};

inline Matrix classify(const ClassifierHead& head, const Matrix& u_final) {
  if (u_final.cols() != head.w.rows())
    throw ConfigError("classify: representation width " +
                      std::to_string(u_final.cols()) +
                      " does not match head input width " +
                      std::to_string(head.w.rows()));
  return (u_final * head.w).rowwise() + head.b.transpose();
}

/// Argmax per row; ties break to the lowest class index.
inline std::vector<int> predict_labels(const Matrix& logits) {
  std::vector<int> labels(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (Index c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = static_cast<int>(c);
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

}  // namespace ppgnn
