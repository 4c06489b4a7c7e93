#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ppgnn/dataset.hpp"
#include "ppgnn/training.hpp"

using namespace ppgnn;

namespace {

/// L = L_pred + L_G with the sampled structure and reward held fixed, as a
/// plain function of the parameters — the target the finite-difference
/// oracle differentiates.
double loss_at(const ModelParams& params, const ModelContext& ctx,
               const LatentGraph* frozen, const RewardVector& delta) {
  const ForwardResult fwd =
      model_forward(params, ctx, SampleMode::deterministic, 0, false, frozen);
  return compute_losses(params, fwd, ctx.data->labels, ctx.data->splits.train, delta)
      .total;
}

/// Central finite differences over every registered parameter, compared
/// entry-wise against the analytic gradients.
double worst_gradient_error(const GraphDataset& data, const TrainConfig& cfg) {
  const ModelContext ctx = make_context(data);
  ModelParams params = initialize_model(data, cfg);

  // One stochastic pass fixes A⁽*⁾ and the reward; both stay frozen while
  // parameters are perturbed, exactly as in a real training step.
  const ForwardResult base = model_forward(params, ctx, SampleMode::stochastic, 99);
  const RewardVector delta =
      reward(data.labels, predict_labels(base.logits), data.splits.train);
  if (is_latent_graph_model(cfg.model)) {
    bool informative = false;
    for (double d : delta.delta) informative |= d != 0.0;
    REQUIRE(informative);  // otherwise the Φ/τ check would be vacuous
  }
  ModelParams grads = model_backward(params, ctx, base, data.splits.train, delta);

  const LatentGraph frozen = base.a_star;
  const LatentGraph* fr = is_latent_graph_model(cfg.model) ? &frozen : nullptr;
  const double analytic_total = loss_at(params, ctx, fr, delta);
  REQUIRE(std::isfinite(analytic_total));

  const auto p_refs = parameter_refs(params);
  const auto g_refs = parameter_refs(grads);
  REQUIRE(p_refs.size() == g_refs.size());
  double worst = 0.0;
  for (std::size_t r = 0; r < p_refs.size(); ++r) {
    REQUIRE(p_refs[r].size == g_refs[r].size);
    for (std::size_t i = 0; i < p_refs[r].size; ++i) {
      double& theta = p_refs[r].data[i];
      const double saved = theta;
      const double h = 1e-4 * std::max(1.0, std::abs(saved));
      theta = saved + h;
      const double f_plus = loss_at(params, ctx, fr, delta);
      theta = saved - h;
      const double f_minus = loss_at(params, ctx, fr, delta);
      theta = saved;
      const double fd = (f_plus - f_minus) / (2.0 * h);
      const double an = g_refs[r].data[i];
      const double rel =
          std::abs(fd - an) / std::max({1e-3, std::abs(fd), std::abs(an)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

GraphDataset gradient_fixture(std::uint64_t seed) {
  GraphDataset data = generate_sbm(30, 3, 0.5, 0.08, 8, 0.3, seed);
  // Widen the train split so the reward mixes correct and incorrect nodes
  // and the graph-loss triplets cover many rows.
  data.splits.train.clear();
  data.splits.val.clear();
  data.splits.test.clear();
  for (Index i = 0; i < 30; ++i)
    (i % 2 == 0 ? data.splits.train : data.splits.val).push_back(i);
  data.splits.test = data.splits.val;
  return data;
}

TrainConfig small_train_config(ModelKind model) {
  TrainConfig cfg;
  cfg.model = model;
  cfg.k = 3;
  cfg.num_anchors = 10;
  cfg.embed_hidden = 8;
  cfg.embed_out = 4;
  cfg.gcn_hidden = 6;
  cfg.gcn_layers = 2;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("reward: hand examples and zero-sum property") {
  const std::vector<int> labels = {0, 1, 2};
  SECTION("one of three correct") {
    const std::vector<int> predictions = {0, 0, 0};
    const RewardVector r = reward(labels, predictions, {0, 1, 2});
    REQUIRE(r.mean_correct == Catch::Approx(1.0 / 3.0).margin(1e-15));
    REQUIRE(r.delta[0] == Catch::Approx(-2.0 / 3.0).margin(1e-15));
    REQUIRE(r.delta[1] == Catch::Approx(1.0 / 3.0).margin(1e-15));
    REQUIRE(r.delta[2] == Catch::Approx(1.0 / 3.0).margin(1e-15));
  }
  SECTION("all correct gives zero reward everywhere") {
    const RewardVector r = reward(labels, labels, {0, 1, 2});
    for (double d : r.delta) REQUIRE(d == 0.0);
    REQUIRE(r.mean_correct == 1.0);
  }
  SECTION("rewards always sum to zero") {
    Rng rng(1);
    std::vector<int> many_labels(40), predictions(40);
    std::vector<Index> eval_set;
    for (std::size_t i = 0; i < 40; ++i) {
      many_labels[i] = static_cast<int>(rng.uniform_below(5));
      predictions[i] = static_cast<int>(rng.uniform_below(5));
      if (i % 3 != 2) eval_set.push_back(static_cast<Index>(i));
    }
    const RewardVector r = reward(many_labels, predictions, eval_set);
    double sum = 0.0;
    for (double d : r.delta) sum += d;
    REQUIRE(std::abs(sum) < 1e-12);
  }
  SECTION("empty eval set is rejected") {
    REQUIRE_THROWS_AS(reward(labels, labels, {}), ConfigError);
  }
}

TEST_CASE("prediction_loss: analytic anchors") {
  SECTION("uniform logits cost ln(num_classes)") {
    const Matrix logits = Matrix::Zero(4, 5);
    const std::vector<int> labels = {0, 1, 2, 3};
    REQUIRE(prediction_loss(logits, labels, {0, 1, 2, 3}) ==
            Catch::Approx(std::log(5.0)).margin(1e-14));
  }
  SECTION("a 50-logit margin drives the loss below 1e-20") {
    Matrix logits = Matrix::Zero(1, 3);
    logits(0, 1) = 50.0;
    REQUIRE(prediction_loss(logits, {1}, {0}) < 1e-20);
    REQUIRE(prediction_loss(logits, {1}, {0}) >= 0.0);
  }
  SECTION("matches an independent softmax cross-entropy to 1e-12") {
    Rng rng(2);
    Matrix logits(6, 4);
    std::vector<int> labels(6);
    for (Index i = 0; i < 6; ++i) {
      labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_below(4));
      for (Index c = 0; c < 4; ++c) logits(i, c) = 3.0 * rng.normal();
    }
    const std::vector<Index> set = {0, 2, 3, 5};
    double oracle = 0.0;
    for (Index i : set) {
      double denom = 0.0;
      for (Index c = 0; c < 4; ++c) denom += std::exp(logits(i, c));
      oracle -= std::log(std::exp(logits(i, labels[static_cast<std::size_t>(i)])) / denom);
    }
    oracle /= static_cast<double>(set.size());
    REQUIRE(prediction_loss(logits, labels, set) ==
            Catch::Approx(oracle).margin(1e-12));
  }
  SECTION("invariant under per-row logit shifts") {
    Rng rng(3);
    Matrix logits(5, 3);
    for (Index i = 0; i < 5; ++i)
      for (Index c = 0; c < 3; ++c) logits(i, c) = rng.normal();
    const std::vector<int> labels = {2, 0, 1, 1, 0};
    const std::vector<Index> set = {0, 1, 3, 4};
    Matrix shifted = logits;
    for (Index i = 0; i < 5; ++i) shifted.row(i).array() += 100.0 * rng.normal();
    Matrix g_base, g_shifted;
    const double base = prediction_loss(logits, labels, set, &g_base);
    const double moved = prediction_loss(shifted, labels, set, &g_shifted);
    REQUIRE(base == Catch::Approx(moved).margin(1e-10));
    REQUIRE((g_base - g_shifted).cwiseAbs().maxCoeff() < 1e-10);
  }
  SECTION("gradient matches finite differences and is zero outside the set") {
    Rng rng(4);
    Matrix logits(4, 3);
    for (Index i = 0; i < 4; ++i)
      for (Index c = 0; c < 3; ++c) logits(i, c) = rng.normal();
    const std::vector<int> labels = {1, 2, 0, 1};
    const std::vector<Index> set = {0, 2};
    Matrix grad;
    prediction_loss(logits, labels, set, &grad);
    REQUIRE(grad.row(1).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(grad.row(3).cwiseAbs().maxCoeff() == 0.0);
    const double h = 1e-6;
    for (Index i = 0; i < 4; ++i)
      for (Index c = 0; c < 3; ++c) {
        Matrix up = logits, down = logits;
        up(i, c) += h;
        down(i, c) -= h;
        const double fd = (prediction_loss(up, labels, set) -
                           prediction_loss(down, labels, set)) /
                          (2.0 * h);
        REQUIRE(grad(i, c) == Catch::Approx(fd).margin(1e-8));
      }
  }
  SECTION("empty set and non-finite logits are rejected") {
    REQUIRE_THROWS_AS(prediction_loss(Matrix::Zero(2, 2), {0, 1}, {}), ConfigError);
    Matrix bad = Matrix::Zero(2, 2);
    bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(prediction_loss(bad, {0, 1}, {0}), NumericError);
  }
}

TEST_CASE("graph_loss: scalar oracles, clamping, and sign behavior") {
  LatentGraph a_star;
  a_star.k = 1;
  a_star.structure = SparseAdjacency::from_coo(2, 2, {{0, 0}, {1, 1}});
  ProbabilityMatrix scores;
  scores.kind = ProbabilityKind::node_node;
  scores.refined = true;
  scores.scores = Matrix::Constant(2, 2, 0.5);

  SECTION("zero reward zeroes the loss") {
    const RewardVector delta{{0.0, 0.0}, 1.0};
    REQUIRE(graph_loss(delta, scores, a_star, {0, 1}) == 0.0);
  }
  SECTION("unit scores zero the loss") {
    scores.scores.setConstant(1.0);
    const RewardVector delta{{0.7, -0.7}, 0.5};
    REQUIRE(graph_loss(delta, scores, a_star, {0, 1}) == 0.0);
  }
  SECTION("two-node hand computation") {
    scores.scores(0, 0) = 0.5;
    scores.scores(1, 1) = 0.25;
    const RewardVector delta{{0.5, -0.5}, 0.5};
    const double expected = 0.5 * std::log(0.5) - 0.5 * std::log(0.25);
    REQUIRE(graph_loss(delta, scores, a_star, {0, 1}) ==
            Catch::Approx(expected).margin(1e-14));
  }
  SECTION("scores at or below the clamp floor use log(1e-12)") {
    scores.scores(0, 0) = 1e-300;
    scores.scores(1, 1) = 0.5;
    const RewardVector delta{{1.0, 0.0}, 0.0};
    REQUIRE(graph_loss(delta, scores, a_star, {0, 1}) ==
            Catch::Approx(std::log(1e-12)).margin(1e-12));
  }
  SECTION("raising a sampled score lowers the loss for negative reward") {
    // δ_i < 0 (node already correct): ∂L/∂ŝ = δ_i/ŝ < 0 pushes ŝ up
    // through gradient descent on L... the loss itself must therefore
    // decrease as the score grows.
    const RewardVector delta{{-0.5, 0.0}, 0.5};
    scores.scores(0, 0) = 0.3;
    const double low = graph_loss(delta, scores, a_star, {0, 1});
    scores.scores(0, 0) = 0.9;
    const double high = graph_loss(delta, scores, a_star, {0, 1});
    REQUIRE(high < low);
  }
  SECTION("unrefined scores and shape mismatches are rejected") {
    scores.refined = false;
    const RewardVector delta{{0.5, -0.5}, 0.5};
    REQUIRE_THROWS_AS(graph_loss(delta, scores, a_star, {0, 1}), ConfigError);
    scores.refined = true;
    const RewardVector short_delta{{0.5}, 0.5};
    REQUIRE_THROWS_AS(graph_loss(short_delta, scores, a_star, {0, 1}), ConfigError);
  }
}

TEST_CASE("analytic gradients match central finite differences", "[gradients]") {
  const GraphDataset data = gradient_fixture(11);
  SECTION("node-node latent graph") {
    const double worst = worst_gradient_error(data, small_train_config(ModelKind::ppgnn));
    CAPTURE(worst);
    REQUIRE(worst < 1e-4);
  }
  SECTION("anchor latent graph") {
    const double worst =
        worst_gradient_error(data, small_train_config(ModelKind::ppgnn_anchor));
    CAPTURE(worst);
    REQUIRE(worst < 1e-4);
  }
  SECTION("observed-graph baseline") {
    const double worst =
        worst_gradient_error(data, small_train_config(ModelKind::gcn_baseline));
    CAPTURE(worst);
    REQUIRE(worst < 1e-4);
  }
}

TEST_CASE("gradient routing: reward reaches only the graph learner") {
  const GraphDataset data = gradient_fixture(13);
  const ModelContext ctx = make_context(data);
  const TrainConfig cfg = small_train_config(ModelKind::ppgnn);
  ModelParams params = initialize_model(data, cfg);
  const ForwardResult fwd = model_forward(params, ctx, SampleMode::stochastic, 7);

  RewardVector zero_delta;
  zero_delta.delta.assign(data.splits.train.size(), 0.0);
  const ModelParams g0 = model_backward(params, ctx, fwd, data.splits.train, zero_delta);
  REQUIRE(g0.embedding->w1.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(g0.embedding->w2.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(g0.embedding->temperature_raw == 0.0);
  REQUIRE(g0.head.w.cwiseAbs().maxCoeff() > 0.0);  // L_pred still flows

  RewardVector live_delta = zero_delta;
  live_delta.delta.front() = 0.5;
  live_delta.delta.back() = -0.5;
  const ModelParams g1 = model_backward(params, ctx, fwd, data.splits.train, live_delta);
  REQUIRE(g1.embedding->w1.cwiseAbs().maxCoeff() > 0.0);
  // The stack and head never see the reward: A⁽*⁾ enters unweighted.
  REQUIRE((g1.head.w - g0.head.w).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t l = 0; l < g1.gcn.weights.size(); ++l)
    REQUIRE((g1.gcn.weights[l] - g0.gcn.weights[l]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam_step reproduces the bias-corrected update") {
  const GraphDataset data = generate_sbm(20, 2, 0.5, 0.1, 4, 0.2, 17);
  TrainConfig cfg = small_train_config(ModelKind::mlp_baseline);
  cfg.learning_rate = 0.1;
  ModelParams params = initialize_model(data, cfg);
  AdamState state = AdamState::for_params(params);

  // Independent replay of the update rule on scalar shadows.
  std::vector<double> shadow, m, v;
  for (const TensorRef& ref : parameter_refs(params))
    for (std::size_t i = 0; i < ref.size; ++i) shadow.push_back(ref.data[i]);
  m.assign(shadow.size(), 0.0);
  v.assign(shadow.size(), 0.0);

  Rng rng(19);
  for (int step = 1; step <= 3; ++step) {
    ModelParams grads = zero_like(params);
    std::vector<double> flat;
    for (const TensorRef& ref : parameter_refs(grads))
      for (std::size_t i = 0; i < ref.size; ++i) {
        ref.data[i] = rng.normal();
        flat.push_back(ref.data[i]);
      }
    adam_step(params, grads, state, cfg);
    for (std::size_t i = 0; i < shadow.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * flat[i];
      v[i] = 0.999 * v[i] + 0.001 * flat[i] * flat[i];
      const double m_hat = m[i] / (1.0 - std::pow(0.9, step));
      const double v_hat = v[i] / (1.0 - std::pow(0.999, step));
      shadow[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
    std::size_t flat_i = 0;
    for (const TensorRef& ref : parameter_refs(params))
      for (std::size_t i = 0; i < ref.size; ++i, ++flat_i)
        REQUIRE(ref.data[i] == Catch::Approx(shadow[flat_i]).margin(1e-12));
  }
}

TEST_CASE("adam_step first update has magnitude ≈ learning rate") {
  const GraphDataset data = generate_sbm(20, 2, 0.5, 0.1, 4, 0.2, 23);
  TrainConfig cfg = small_train_config(ModelKind::mlp_baseline);
  ModelParams params = initialize_model(data, cfg);
  const ModelParams before = params;
  ModelParams grads = zero_like(params);
  for (const TensorRef& ref : parameter_refs(grads))
    for (std::size_t i = 0; i < ref.size; ++i) ref.data[i] = 2.0;
  AdamState state = AdamState::for_params(params);
  adam_step(params, grads, state, cfg);
  // m̂/(√v̂+ε) = g/(|g|+ε) ≈ sign(g), so every step moves by ≈ lr.
  const double expected = cfg.learning_rate * 2.0 / (2.0 + cfg.adam_eps);
  auto p_now = parameter_refs(params);
  ModelParams before_copy = before;
  auto p_before = parameter_refs(before_copy);
  for (std::size_t r = 0; r < p_now.size(); ++r)
    for (std::size_t i = 0; i < p_now[r].size; ++i)
      REQUIRE(p_before[r].data[i] - p_now[r].data[i] ==
              Catch::Approx(expected).margin(1e-12));
}

TEST_CASE("accuracy_on counts exact matches over the split") {
  const std::vector<int> labels = {0, 1, 2, 0, 1};
  const std::vector<int> predictions = {0, 2, 2, 0, 0};
  REQUIRE(accuracy_on(labels, predictions, {0, 1, 2, 3, 4}) ==
          Catch::Approx(0.6).margin(1e-15));
  REQUIRE(accuracy_on(labels, predictions, {1, 3}) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE_THROWS_AS(accuracy_on(labels, predictions, {}), ConfigError);
}

TEST_CASE("initialize_model applies the documented anchor defaults") {
  const GraphDataset data = generate_sbm(25, 2, 0.5, 0.1, 4, 0.2, 29);
  TrainConfig cfg = small_train_config(ModelKind::ppgnn_anchor);
  cfg.num_anchors = 0;  // → ⌈N/10⌉ = 3
  cfg.k = 3;
  const ModelParams params = initialize_model(data, cfg);
  REQUIRE(params.anchors.has_value());
  REQUIRE(params.anchors->indices.size() == 3);

  cfg.k = 4;  // now k exceeds the derived anchor count
  REQUIRE_THROWS_AS(initialize_model(data, cfg), ConfigError);

  cfg.k = 3;
  cfg.num_anchors = 26;  // more anchors than nodes
  REQUIRE_THROWS_AS(initialize_model(data, cfg), ConfigError);
}

TEST_CASE("model_forward: frozen structures reproduce and baselines ignore sampling") {
  const GraphDataset data = gradient_fixture(31);
  const ModelContext ctx = make_context(data);
  const ModelParams params = initialize_model(data, small_train_config(ModelKind::ppgnn));
  const ForwardResult a = model_forward(params, ctx, SampleMode::stochastic, 41);
  const ForwardResult b =
      model_forward(params, ctx, SampleMode::stochastic, 999, false, &a.a_star);
  REQUIRE(a.a_star.structure.col_indices == b.a_star.structure.col_indices);
  REQUIRE((a.logits - b.logits).cwiseAbs().maxCoeff() == 0.0);

  const ModelParams mlp =
      initialize_model(data, small_train_config(ModelKind::mlp_baseline));
  const ForwardResult m1 = model_forward(mlp, ctx, SampleMode::stochastic, 1);
  const ForwardResult m2 = model_forward(mlp, ctx, SampleMode::stochastic, 2);
  REQUIRE((m1.logits - m2.logits).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit: zero epochs returns the initialization untouched") {
  const GraphDataset data = generate_sbm(40, 2, 0.4, 0.05, 6, 0.3, 37);
  TrainConfig cfg = small_train_config(ModelKind::ppgnn);
  cfg.max_epochs = 0;
  const FitResult result = fit(data, cfg);
  REQUIRE(result.epochs.empty());
  REQUIRE(result.best_epoch == 0);
  REQUIRE(result.best_val_acc == 0.0);
  const ModelParams fresh = initialize_model(data, cfg);
  REQUIRE((result.params.embedding->w1 - fresh.embedding->w1).cwiseAbs().maxCoeff() ==
          0.0);
  REQUIRE((result.params.head.w - fresh.head.w).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit: identical configuration and seed give identical traces") {
  const GraphDataset data = generate_sbm(60, 3, 0.4, 0.04, 8, 0.3, 41);
  TrainConfig cfg = small_train_config(ModelKind::ppgnn);
  cfg.max_epochs = 5;
  const FitResult a = fit(data, cfg);
  const FitResult b = fit(data, cfg);
  REQUIRE(a.epochs.size() == b.epochs.size());
  REQUIRE(a.epochs.size() == 5);
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    REQUIRE(a.epochs[e].l_pred == b.epochs[e].l_pred);
    REQUIRE(a.epochs[e].l_graph == b.epochs[e].l_graph);
    REQUIRE(a.epochs[e].train_acc == b.epochs[e].train_acc);
    REQUIRE(a.epochs[e].val_acc == b.epochs[e].val_acc);
    REQUIRE(a.epochs[e].wall_ms == 0.0);
  }
  REQUIRE(a.best_epoch == b.best_epoch);
  REQUIRE((a.params.head.w - b.params.head.w).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit: different seeds change the trajectory") {
  const GraphDataset data = generate_sbm(60, 3, 0.4, 0.04, 8, 0.3, 43);
  TrainConfig cfg = small_train_config(ModelKind::ppgnn);
  cfg.max_epochs = 3;
  const FitResult a = fit(data, cfg);
  cfg.seed = 6;
  const FitResult c = fit(data, cfg);
  REQUIRE(a.epochs[0].l_pred != c.epochs[0].l_pred);
}

TEST_CASE("fit learns a separable block model", "[training]") {
  const GraphDataset data = generate_sbm(200, 4, 0.2, 0.01, 16, 0.1, 47);
  TrainConfig cfg;
  cfg.model = ModelKind::ppgnn;
  cfg.k = 4;
  cfg.max_epochs = 100;
  cfg.seed = 3;
  const FitResult result = fit(data, cfg);
  REQUIRE(result.best_val_acc >= 0.9);
  const double test_acc = evaluate(result.params, data, data.splits.test);
  REQUIRE(test_acc >= 0.9);
  REQUIRE(result.best_epoch >= 1);
  REQUIRE(static_cast<std::size_t>(result.best_epoch) <= result.epochs.size());

  // The two evaluate overloads agree.
  const ModelContext ctx = make_context(data);
  REQUIRE(evaluate(result.params, ctx, data.splits.test) == test_acc);
}

TEST_CASE("fit surfaces non-finite numerics as NumericError") {
  GraphDataset data = generate_sbm(20, 2, 0.5, 0.1, 4, 0.2, 53);
  data.features(0, 0) = std::numeric_limits<double>::infinity();
  TrainConfig cfg = small_train_config(ModelKind::gcn_baseline);
  cfg.max_epochs = 3;
  REQUIRE_THROWS_AS(fit(data, cfg), NumericError);
}

TEST_CASE("fit validates splits and configuration") {
  GraphDataset data = generate_sbm(20, 2, 0.5, 0.1, 4, 0.2, 59);
  TrainConfig cfg = small_train_config(ModelKind::mlp_baseline);
  cfg.learning_rate = 0.0;
  REQUIRE_THROWS_AS(fit(data, cfg), ConfigError);
  cfg.learning_rate = 5e-3;
  data.splits.train.clear();
  REQUIRE_THROWS_AS(fit(data, cfg), ConfigError);
}
