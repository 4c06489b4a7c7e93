#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "ppgnn/csr.hpp"
#include "ppgnn/error.hpp"
#include "ppgnn/init.hpp"
#include "ppgnn/rng.hpp"

namespace ppgnn {

// Smallest probability kept in a kernel matrix: preserves the (0, 1]
// range when exp() would underflow for very distant pairs.
inline constexpr double kProbFloor = 1e-300;
// Clamp applied to scores before any logarithm (Gumbel keys, graph loss).
inline constexpr double kLogClamp = 1e-12;

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

struct EmbeddingConfig {
  Index in_dim = 0;
  Index hidden_dim = 64;
  Index out_dim = 32;
  /// Propagate the input over the observed graph before the first linear
  /// layer (turns layer 1 into a graph convolution).
  bool graph_conv_first_layer = false;
};

/// Two-layer perceptron mapping features into the latent space, plus the
/// learnable kernel width t = softplus(temperature_raw) + 1e-4.
struct EmbeddingNet {
  EmbeddingConfig config;
  Matrix w1, w2;  // in×hidden, hidden×out
  Vector b1, b2;
  double temperature_raw = 0.0;

  static EmbeddingNet initialized(const EmbeddingConfig& cfg, std::uint64_t seed) {
    if (cfg.in_dim <= 0 || cfg.hidden_dim <= 0 || cfg.out_dim <= 0)
      throw ConfigError("EmbeddingNet: dimensions must be positive");
    EmbeddingNet net;
    net.config = cfg;
    net.w1.resize(cfg.in_dim, cfg.hidden_dim);
    net.w2.resize(cfg.hidden_dim, cfg.out_dim);
    net.b1 = Vector::Zero(cfg.hidden_dim);
    net.b2 = Vector::Zero(cfg.out_dim);
    Rng rng(seed);
    glorot_fill(net.w1, rng);
    glorot_fill(net.w2, rng);
    // Raw value solving softplus(raw) + 1e-4 = 1, so training starts at t = 1.
    net.temperature_raw = std::log(std::expm1(1.0 - 1e-4));
    return net;
  }

  double temperature() const { return softplus(temperature_raw) + 1e-4; }
};

/// Intermediates recorded by embed() for the backward pass.
struct EmbedCache {
  Matrix input;  // layer-1 input (propagated if graph conv is on)
  Matrix pre1;   // pre-rectifier hidden activations
  Matrix z;      // embeddings
};

/// z = f_Φ(x): rectified two-layer map, optionally preceded by one
/// propagation step over the observed graph.
inline Matrix embed(const EmbeddingNet& net, const Matrix& x,
                    const NormalizedOperator* a0 = nullptr,
                    EmbedCache* cache = nullptr) {
  if (x.cols() != net.config.in_dim)
    throw ConfigError("embed: feature width " + std::to_string(x.cols()) +
                      " does not match net input width " +
                      std::to_string(net.config.in_dim));
  Matrix input;
  if (net.config.graph_conv_first_layer) {
    if (a0 == nullptr)
      throw ConfigError("embed: graph-convolution first layer needs the observed graph");
    input = a0->apply(x);
  } else {
    input = x;
  }
  Matrix pre1 = (input * net.w1).rowwise() + net.b1.transpose();
  Matrix z = (pre1.cwiseMax(0.0) * net.w2).rowwise() + net.b2.transpose();
  if (!z.allFinite()) throw NumericError("embed: non-finite embeddings");
  if (cache) {
    cache->input = std::move(input);
    cache->pre1 = std::move(pre1);
    cache->z = z;
  }
  return z;
}

enum class ProbabilityKind { node_node, node_anchor };

/// Gaussian-kernel edge scores: P (node-node), R (node-anchor), and their
/// probability-passed refinements P̂, R̂. Entries always lie in (0, 1].
struct ProbabilityMatrix {
  Matrix scores;
  ProbabilityKind kind = ProbabilityKind::node_node;
  bool refined = false;

  Index rows() const { return scores.rows(); }
  Index cols() const { return scores.cols(); }
};

/// p_ij = exp(−‖z_i − z_j‖² / t); symmetric with unit diagonal.
inline ProbabilityMatrix pairwise_probabilities(const Matrix& z, double t) {
  if (!(t > 0.0)) throw ConfigError("pairwise_probabilities: t must be > 0");
  if (!z.allFinite()) throw NumericError("pairwise_probabilities: non-finite embeddings");
  const Index n = z.rows();
  ProbabilityMatrix p;
  p.kind = ProbabilityKind::node_node;
  p.scores.resize(n, n);
  for (Index j = 0; j < n; ++j) {
    p.scores(j, j) = 1.0;
    for (Index i = j + 1; i < n; ++i) {
      const double d2 = (z.row(i) - z.row(j)).squaredNorm();
      const double v = std::max(std::exp(-d2 / t), kProbFloor);
      p.scores(i, j) = v;
      p.scores(j, i) = v;
    }
  }
  return p;
}

namespace detail {

inline ProbabilityMatrix pass_probabilities(const NormalizedOperator& op,
                                            const ProbabilityMatrix& p) {
  if (p.refined) throw ConfigError("probability passing: input already refined");
  if (op.base.num_cols != p.rows())
    throw ConfigError("probability passing: operator is " +
                      std::to_string(op.base.num_rows) + "x" +
                      std::to_string(op.base.num_cols) + " but scores have " +
                      std::to_string(p.rows()) + " rows");
  ProbabilityMatrix out;
  out.kind = p.kind;
  out.refined = true;
  // Convex combinations of (0, 1] entries; the min() guards fp round-up.
  out.scores = op.apply(p.scores).cwiseMin(1.0).cwiseMax(kProbFloor);
  return out;
}

}  // namespace detail

/// P̂ = D⁻¹A⁽⁰⁾P with self-loop-augmented row-stochastic A⁽⁰⁾: each node's
/// probability row becomes the mean of its neighborhood's rows.
inline ProbabilityMatrix probability_passing(const NormalizedOperator& a0_row_stochastic,
                                             const ProbabilityMatrix& p) {
  if (p.kind != ProbabilityKind::node_node)
    throw ConfigError("probability_passing: expected node-node scores");
  return detail::pass_probabilities(a0_row_stochastic, p);
}

inline ProbabilityMatrix probability_passing(const SparseAdjacency& a0,
                                             const ProbabilityMatrix& p) {
  return probability_passing(degree_normalize(a0, Normalization::row_stochastic, true), p);
}

/// Landmark nodes used by the linear-complexity variant.
struct AnchorSet {
  std::vector<Index> indices;  // distinct, ascending
  std::uint64_t seed = 0;

  Index size() const { return static_cast<Index>(indices.size()); }
};

/// Uniform without-replacement sample of s anchors from [0, n).
inline AnchorSet sample_anchors(Index n, Index s, std::uint64_t seed) {
  if (s < 1 || s > n) throw ConfigError("sample_anchors: need 1 <= s <= n");
  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});
  Rng rng(seed);
  for (Index t = 0; t < s; ++t) {
    const auto pick = static_cast<std::size_t>(t) +
                      rng.uniform_below(static_cast<std::uint64_t>(n - t));
    std::swap(pool[static_cast<std::size_t>(t)], pool[pick]);
  }
  AnchorSet anchors;
  anchors.seed = seed;
  anchors.indices.assign(pool.begin(), pool.begin() + s);
  std::sort(anchors.indices.begin(), anchors.indices.end());
  return anchors;
}

/// r_ij = exp(−‖z_i − z_{u_j}‖² / t) against the anchor embeddings.
inline ProbabilityMatrix node_anchor_probabilities(const Matrix& z,
                                                   const AnchorSet& anchors,
                                                   double t) {
  if (!(t > 0.0)) throw ConfigError("node_anchor_probabilities: t must be > 0");
  if (!z.allFinite())
    throw NumericError("node_anchor_probabilities: non-finite embeddings");
  const Index n = z.rows();
  const Index s = anchors.size();
  ProbabilityMatrix r;
  r.kind = ProbabilityKind::node_anchor;
  r.scores.resize(n, s);
  for (Index j = 0; j < s; ++j) {
    const Index u = anchors.indices[static_cast<std::size_t>(j)];
    if (u < 0 || u >= n)
      throw ConfigError("node_anchor_probabilities: anchor index out of range");
    for (Index i = 0; i < n; ++i) {
      const double d2 = (z.row(i) - z.row(u)).squaredNorm();
      r.scores(i, j) = std::max(std::exp(-d2 / t), kProbFloor);
    }
  }
  return r;
}

/// R̂ = D⁻¹A⁽⁰⁾R: probability passing on the N×s node-anchor scores.
inline ProbabilityMatrix anchor_probability_passing(
    const NormalizedOperator& a0_row_stochastic, const ProbabilityMatrix& r) {
  if (r.kind != ProbabilityKind::node_anchor)
    throw ConfigError("anchor_probability_passing: expected node-anchor scores");
  return detail::pass_probabilities(a0_row_stochastic, r);
}

inline ProbabilityMatrix anchor_probability_passing(const SparseAdjacency& a0,
                                                    const ProbabilityMatrix& r) {
  return anchor_probability_passing(
      degree_normalize(a0, Normalization::row_stochastic, true), r);
}

enum class SampleMode { stochastic, deterministic };

/// Sampled sparse structure A⁽*⁾: exactly k unweighted edges per row.
/// Square (node-node) or N×s bipartite (node-anchor).
struct LatentGraph {
  SparseAdjacency structure;
  Index k = 0;
  SampleMode mode = SampleMode::deterministic;
};

/// Select k columns per row. Stochastic mode perturbs log-scores with
/// Gumbel noise (the first k of log s_i − log(−log q), q ∼ U(0,1)) which
/// draws without replacement from the normalized-score distribution;
/// deterministic mode takes the k largest scores, ties to the lowest
/// column index.
inline LatentGraph gumbel_top_k(const ProbabilityMatrix& scores, Index k,
                                SampleMode mode, std::uint64_t seed) {
  const Index n = scores.rows();
  const Index cols = scores.cols();
  if (k < 1) throw ConfigError("gumbel_top_k: k must be >= 1");
  if (k > cols)
    throw ConfigError("gumbel_top_k: k = " + std::to_string(k) + " exceeds " +
                      std::to_string(cols) + " candidate columns");

  LatentGraph g;
  g.k = k;
  g.mode = mode;
  g.structure.num_rows = n;
  g.structure.num_cols = cols;
  g.structure.row_offsets.resize(static_cast<std::size_t>(n) + 1);
  g.structure.col_indices.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(k));

  std::vector<double> keys(static_cast<std::size_t>(cols));
  std::vector<Index> order(static_cast<std::size_t>(cols));
  for (Index i = 0; i < n; ++i) {
    if (mode == SampleMode::stochastic) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
      for (Index j = 0; j < cols; ++j) {
        const double q = rng.uniform_open01();
        keys[static_cast<std::size_t>(j)] =
            std::log(std::max(scores.scores(i, j), kLogClamp)) - std::log(-std::log(q));
      }
    } else {
      for (Index j = 0; j < cols; ++j)
        keys[static_cast<std::size_t>(j)] = scores.scores(i, j);
    }
    std::iota(order.begin(), order.end(), Index{0});
    auto larger = [&](Index a, Index b) {
      const double ka = keys[static_cast<std::size_t>(a)];
      const double kb = keys[static_cast<std::size_t>(b)];
      return ka != kb ? ka > kb : a < b;
    };
    std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), larger);
    std::sort(order.begin(), order.begin() + k);
    const std::size_t base = static_cast<std::size_t>(i) * static_cast<std::size_t>(k);
    for (Index t = 0; t < k; ++t)
      g.structure.col_indices[base + static_cast<std::size_t>(t)] =
          order[static_cast<std::size_t>(t)];
    g.structure.row_offsets[static_cast<std::size_t>(i) + 1] =
        static_cast<Index>(base) + k;
  }
  return g;
}

}  // namespace ppgnn
