#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "inalu/errors.hpp"
#include "inalu/trainer.hpp"
#include "test_util.hpp"

using namespace inalu;

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::row({1.0, -2.0, 0.5});
  std::vector<Tensor*> params = {&p};
  std::vector<Tensor> grads = {Tensor::row({0.3, -4.0, 0.0})};
  auto state = OptimizerState::for_params(params);
  TrainConfig cfg;
  adam_step(params, grads, state, cfg);
  // bias-corrected first step: m_hat / sqrt(v_hat) = g / |g|
  EXPECT_NEAR(p[0], 1.0 - cfg.learning_rate * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + cfg.learning_rate * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(p[2], 0.5);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, SecondStepMatchesRecurrence) {
  Tensor p = Tensor::scalar(0.0);
  std::vector<Tensor*> params = {&p};
  auto state = OptimizerState::for_params(params);
  TrainConfig cfg;
  const double g1 = 1.0, g2 = -0.5;
  adam_step(params, std::vector<Tensor>{Tensor::scalar(g1)}, state, cfg);
  adam_step(params, std::vector<Tensor>{Tensor::scalar(g2)}, state, cfg);
  double m = 0, v = 0, x = 0;
  for (int t = 1; t <= 2; ++t) {
    const double g = t == 1 ? g1 : g2;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.001 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(p.item(), x, 1e-15);
}

TEST(Clipping, GlobalNorm) {
  std::vector<Tensor> g = {Tensor::row({3.0, 0.0}), Tensor::scalar(4.0)};
  EXPECT_DOUBLE_EQ(global_norm(g), 5.0);
  EXPECT_DOUBLE_EQ(clip_gradients(g, 0.1), 5.0);
  EXPECT_NEAR(global_norm(g), 0.1, 1e-15);
  EXPECT_NEAR(g[0][0], 0.06, 1e-15);
  std::vector<Tensor> small = {Tensor::scalar(0.05)};
  clip_gradients(small, 0.1);
  EXPECT_EQ(small[0].item(), 0.05);
}

TEST(Reinit, RuleCases) {
  TrainConfig cfg;
  cfg.reinit_stale_steps = 4;
  std::vector<double> improving = {10, 9, 8, 7, 6, 5, 4, 3};
  std::vector<double> stale = {10, 2, 3, 3, 4, 5, 5, 5};
  std::vector<double> stale_low = {0.5, 0.2, 0.3, 0.3, 0.4, 0.5, 0.5, 0.5};
  EXPECT_FALSE(should_reinitialize(10, improving, cfg));
  EXPECT_TRUE(should_reinitialize(10, stale, cfg));
  EXPECT_FALSE(should_reinitialize(9, stale, cfg));       // not a check epoch
  EXPECT_FALSE(should_reinitialize(10, stale_low, cfg));  // loss already small
  EXPECT_FALSE(should_reinitialize(10, {}, cfg));
}

TEST(Init, ShapesAndDeterminism) {
  Architecture arch{CellVariant::inalu_independent_weights, {100, 2, 1}};
  const InitSpec init;
  const Model a = init_params(arch, init, 5), b = init_params(arch, init, 5), c = init_params(arch, init, 6);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].in_dim(), 100u);
  EXPECT_EQ(a[1].out_dim(), 1u);
  EXPECT_EQ(a[0].w_hat_a, b[0].w_hat_a);
  EXPECT_NE(a[0].w_hat_a, c[0].w_hat_a);
  double mean = 0;
  for (double v : a[0].m_hat_a.values()) mean += v;
  EXPECT_NEAR(mean / 200, -1.0, 0.15);
}

TEST(Init, LabelsAndValidation) {
  EXPECT_EQ(InitSpec{}.label(), "(0,-1,1)/(0.5,0.5,0.5)");
  InitSpec bad;
  bad.w_hat.stddev = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW((Architecture{CellVariant::nalu_vector_gate, {2}}.validate()), ConfigError);
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Evaluate, ExactModelHasZeroError) {
  CellParams p = CellParams::zeros(CellVariant::inalu_independent_weights, 2, 1);
  p.w_hat_a = Tensor{{50.0}, {50.0}};
  p.m_hat_a = Tensor{{50.0}, {50.0}};
  p.gate = Tensor{{50.0}};
  const auto task = TaskSpec::make(TaskKind::minimal, Operation::add, DistributionSpec::uniform(-3, 3),
                                   DistributionSpec::uniform(3, 5), 0, 1000);
  const auto data = build_dataset(task, Split::extrapolation, 0);
  EXPECT_LT(evaluate({p}, CellHyper{}, data, 128), 1e-20);
  const std::vector<Dataset> parts = {data, build_dataset(task, Split::interpolation, 0)};
  EXPECT_LT(evaluate_union({p}, CellHyper{}, parts), 1e-20);
}

TEST(Evaluate, UnionWeightsBySampleCount) {
  // a constant-zero model: MSE is the mean of y^2 over the pooled rows
  CellParams p = CellParams::zeros(CellVariant::inalu_shared_weights, 1, 1);
  p.gate = Tensor{{60.0}};
  Dataset a{Tensor{{1.0}}, Tensor{{2.0}}}, b{Tensor{{1.0}, {1.0}, {1.0}}, Tensor{{1.0}, {1.0}, {1.0}}};
  const std::vector<Dataset> parts = {a, b};
  EXPECT_NEAR(evaluate_union({p}, CellHyper{}, parts), (4.0 + 3.0) / 4.0, 1e-12);
}

TEST(SmallWeights, Fraction) {
  CellParams p = CellParams::zeros(CellVariant::inalu_shared_weights, 2, 1);
  p.w_hat_a = Tensor{{0.5}, {3.0}};
  p.m_hat_a = Tensor{{-2.0}, {0.0}};
  p.gate = Tensor{{1.0}};
  EXPECT_DOUBLE_EQ(small_weight_fraction({p}), 2.0 / 5.0);
}

TEST(GradientCheck, AllVariantsPass) {
  for (CellVariant v : kAllVariants) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      GradCheckDims dims;
      dims.in = 3;
      dims.out = 2;
      dims.large_inputs = seed == 4;
      dims.layers = dims.large_inputs ? 1 : 2;
      const auto r = gradient_check(v, dims, seed);
      EXPECT_LT(r.max_rel_error, 1e-4) << to_string(v) << " seed " << seed;
      EXPECT_GT(r.checked, 0u);
    }
  }
}

TEST(GradientCheck, DetectsAWrongGradient) {
  // a model whose loss we perturb through the target: the check itself must
  // notice a mismatch when handed an inconsistent finite-difference step
  CellParams p = CellParams::zeros(CellVariant::inalu_independent_weights, 2, 1);
  std::mt19937_64 rng(1);
  for (auto& [n, t] : p.named()) *t = testutil::random_tensor(t->rows(), t->cols(), rng);
  GradCheckOptions opts;
  opts.step = 1.0;  // far too coarse for a curved loss
  const auto r = gradient_check({p}, Tensor{{1.5, -0.7}, {0.4, 2.0}}, Tensor::column({1.0, -1.0}),
                                CellHyper{}, opts);
  EXPECT_GT(r.max_rel_error, 1e-4);
}

namespace {

TaskSpec minimal_task(Operation op, std::size_t n = 640) {
  return TaskSpec::make(TaskKind::minimal, op, DistributionSpec::uniform(-3, 3), DistributionSpec::uniform(-5, 5),
                        0, n);
}

}  // namespace

TEST(Train, LearnsAdditionOnTheMinimalTask) {
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.steps_per_epoch = 100;
  const auto report = train({CellVariant::inalu_independent_weights, {2, 1}}, minimal_task(Operation::add), cfg, 0);
  EXPECT_FALSE(report.failed);
  EXPECT_LT(report.extrap_mse, 1e-4);
  EXPECT_LT(report.final_train_loss, report.initial_train_loss);
  EXPECT_EQ(report.epochs_run, 100);
  ASSERT_TRUE(report.reg_activation_epoch.has_value());
  EXPECT_GT(*report.reg_activation_epoch, 10);
}

TEST(Train, ReproducibleForASeed) {
  TrainConfig cfg;
  cfg.epochs = 3;
  const Architecture arch{CellVariant::inalu_shared_weights, {2, 1}};
  const auto a = train(arch, minimal_task(Operation::mul), cfg, 12);
  const auto b = train(arch, minimal_task(Operation::mul), cfg, 12);
  EXPECT_EQ(a.extrap_mse, b.extrap_mse);
  EXPECT_EQ(a.params[0].w_hat_a, b.params[0].w_hat_a);
}

TEST(Train, ProgressOncePerEpochAndReinitCapped) {
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.reinit_check_every_epochs = 2;
  cfg.reinit_stale_steps = 5;
  cfg.reinit_loss_threshold = 1e-12;  // force the reinit condition
  int lines = 0;
  TrainOptions opts;
  opts.progress = [&](const ProgressLine& l) {
    ++lines;
    EXPECT_LE(l.reinit_count, 9);
  };
  const auto report = train({CellVariant::inalu_independent_weights, {2, 1}}, minimal_task(Operation::div, 128),
                            cfg, 1, opts);
  EXPECT_EQ(lines, 40);
  EXPECT_LE(report.reinit_count, cfg.max_reinits);
  EXPECT_FALSE(report.failed);
}

TEST(Train, BaselineSkipsRegularizerByDefault) {
  TrainConfig cfg;
  cfg.epochs = 15;
  const auto r = train({CellVariant::nalu_vector_gate, {2, 1}}, minimal_task(Operation::add), cfg, 0);
  EXPECT_FALSE(r.reg_activation_epoch.has_value());
  EXPECT_EQ(r.reinit_count, 0);
}

TEST(Train, ProgressLineFormat) {
  ProgressLine l{12, 340, 1.5e-3, true, 2};
  EXPECT_EQ(format_progress(l, "x"), "progress x epoch=12 step=340 loss=1.500000e-03 reg=1 reinit=2");
}

TEST(Adam, StepBoundedByLearningRateForFixedMagnitudeGradients) {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution flip(0.3);
  Tensor p(1, 4, 0.0);
  std::vector<Tensor*> params = {&p};
  auto state = OptimizerState::for_params(params);
  TrainConfig cfg;
  for (int step = 0; step < 2000; ++step) {
    Tensor g(1, 4);
    for (std::size_t i = 0; i < 4; ++i) g[i] = (flip(rng) ? -1.0 : 1.0) * (0.5 + i);
    const Tensor before = p;
    adam_step(params, std::vector<Tensor>{g}, state, cfg);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_LE(std::abs(p[i] - before[i]), cfg.learning_rate * (1 + 1e-9));
    }
  }
}

TEST(Train, LossDropsByThreeOrdersOnMinimalAdd) {
  TrainConfig cfg;
  cfg.steps_per_epoch = 100;
  std::vector<double> ratios;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = train({CellVariant::inalu_independent_weights, {2, 1}}, minimal_task(Operation::add), cfg, seed);
    ratios.push_back(r.final_train_loss / r.initial_train_loss);
  }
  std::sort(ratios.begin(), ratios.end());
  EXPECT_LT(0.5 * (ratios[4] + ratios[5]), 1e-3);
}

TEST(Train, RegularizerSaturatesWeights) {
  TrainConfig cfg;
  cfg.steps_per_epoch = 100;
  const auto r = train({CellVariant::inalu_independent_weights, {2, 1}}, minimal_task(Operation::add), cfg, 3);
  ASSERT_TRUE(r.small_weight_fraction_at_reg_activation.has_value());
  ASSERT_LE(*r.reg_activation_epoch, cfg.epochs - 5);
  EXPECT_LT(r.final_small_weight_fraction, *r.small_weight_fraction_at_reg_activation);
}
