#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "inalu/autodiff.hpp"
#include "inalu/errors.hpp"
#include "test_util.hpp"

using namespace inalu;
using namespace inalu::ad;
using testutil::max_fd_error;
using testutil::probe;
using testutil::random_tensor;

TEST(Tape, MatmulValueAndGradient) {
  Tape tape;
  auto a = tape.parameter(Tensor{{1, 2}, {3, 4}});
  auto b = tape.parameter(Tensor{{5}, {6}});
  auto c = matmul(a, b);
  EXPECT_EQ(c.value(), (Tensor{{17}, {39}}));
  tape.backward(sum(c));
  // d sum(AB)/dA = 1 * B^T per row, d/dB = column sums of A
  EXPECT_EQ(a.grad(), (Tensor{{5, 6}, {5, 6}}));
  EXPECT_EQ(b.grad(), (Tensor{{4}, {6}}));
}

TEST(Tape, ProductRuleOnSharedOperand) {
  Tape tape;
  auto x = tape.parameter(Tensor::row({3.0, -2.0}));
  tape.backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad(), Tensor::row({6.0, -4.0}));
}

TEST(Tape, BackwardClearsPreviousGradients) {
  Tape tape;
  auto x = tape.parameter(Tensor::scalar(2.0));
  auto y = mul(x, x);
  tape.backward(y);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(x.grad().item(), 4.0);
}

TEST(Tape, ScalarAndRowBroadcast) {
  Tape tape;
  auto m = tape.parameter(Tensor{{1, 2}, {3, 4}});
  auto s = tape.parameter(Tensor::scalar(10.0));
  auto r = tape.parameter(Tensor::row({1.0, -1.0}));
  auto y = mul(add(m, s), r);
  EXPECT_EQ(y.value(), (Tensor{{11, -12}, {13, -14}}));
  tape.backward(sum(y));
  EXPECT_DOUBLE_EQ(s.grad().item(), 0.0);  // 1 - 1 + 1 - 1
  EXPECT_EQ(r.grad(), Tensor::row({24.0, 26.0}));
  EXPECT_THROW(add(m, tape.constant(Tensor(3, 1))), ConfigError);
}

TEST(Tape, SignHasZeroGradientAndAbsSubgradientIsZeroAtZero) {
  Tape tape;
  auto x = tape.parameter(Tensor::row({-2.0, 0.0, 3.0}));
  tape.backward(add(sum(sign(x)), sum(abs(x))));
  EXPECT_EQ(x.grad(), Tensor::row({-1.0, 0.0, 1.0}));
  EXPECT_EQ(sign(x).value(), Tensor::row({-1.0, 0.0, 1.0}));
}

TEST(Tape, ClampTiesFollowTensorBranch) {
  Tape tape;
  auto x = tape.parameter(Tensor::row({1.0, 2.0, 3.0}));
  tape.backward(add(sum(min_const(x, 2.0)), sum(max_const(x, 2.0))));
  // min passes 1,1,0; max passes 0,1,1
  EXPECT_EQ(x.grad(), Tensor::row({1.0, 2.0, 1.0}));
}

TEST(Tape, LogRejectsNonPositive) {
  Tape tape;
  EXPECT_THROW(log(tape.constant(Tensor::row({1.0, 0.0}))), NumericDomainError);
  EXPECT_THROW(log(tape.constant(Tensor::scalar(-1.0))), NumericDomainError);
  EXPECT_NO_THROW(log(tape.constant(Tensor::scalar(1e-300))));
}

TEST(Tape, BackwardNeedsScalar) {
  Tape tape;
  auto x = tape.parameter(Tensor(2, 2, 1.0));
  EXPECT_THROW(tape.backward(x), ConfigError);
}

TEST(Tape, VarsFromAnotherTapeAreRejected) {
  Tape t1, t2;
  auto a = t1.parameter(Tensor::scalar(1.0));
  auto b = t2.parameter(Tensor::scalar(1.0));
  EXPECT_THROW(add(a, b), ConfigError);
}

TEST(Tape, RowProductWithZeroEntry) {
  Tape tape;
  auto x = tape.parameter(Tensor{{2, 0, 5}, {-1, 3, 2}});
  auto p = row_product(x);
  EXPECT_EQ(p.value(), Tensor::column({0.0, -6.0}));
  tape.backward(sum(p));
  // d/dx_j prod = product of the other entries
  EXPECT_EQ(x.grad(), (Tensor{{0, 10, 0}, {6, -2, -3}}));
}

TEST(Tape, MseLoss) {
  Tape tape;
  auto p = tape.parameter(Tensor::column({1.0, 2.0, 4.0}));
  auto y = tape.constant(Tensor::column({1.0, 0.0, 1.0}));
  auto l = mse_loss(p, y);
  EXPECT_DOUBLE_EQ(l.value().item(), (0.0 + 4.0 + 9.0) / 3.0);
  tape.backward(l);
  EXPECT_EQ(p.grad(), Tensor::column({0.0, 4.0 / 3.0, 2.0}));
}

TEST(Tape, ColumnConcatTranspose) {
  Tape tape;
  auto x = tape.parameter(Tensor{{1, 2, 3}, {4, 5, 6}});
  auto c = tape.column(x, 2);
  EXPECT_EQ(c.value(), Tensor::column({3.0, 6.0}));
  std::vector<Var> parts = {c, tape.column(x, 0)};
  auto cat = tape.concat_cols(parts);
  EXPECT_EQ(cat.value(), (Tensor{{3, 1}, {6, 4}}));
  EXPECT_EQ(tape.transpose(cat).value(), (Tensor{{3, 6}, {1, 4}}));
  EXPECT_THROW(tape.column(x, 3), ConfigError);
}

TEST(Tape, StableSigmoid) {
  EXPECT_DOUBLE_EQ(ad::sigmoid(0.0), 0.5);
  EXPECT_GT(ad::sigmoid(-800.0), -1e-300);
  EXPECT_DOUBLE_EQ(ad::sigmoid(800.0), 1.0);
  EXPECT_NEAR(ad::sigmoid(-20.0), 1.0 / (1.0 + std::exp(20.0)), 1e-24);
}

// Finite-difference property checks over random shapes and values.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(GetParam());
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  const std::size_t r = dim(rng), c = dim(rng), k = dim(rng);
  const Tensor a = random_tensor(r, c, rng);
  const Tensor b = random_tensor(r, c, rng);
  const Tensor w = random_tensor(c, k, rng);
  const Tensor pos = random_tensor(r, c, rng, 0.5, 2.0);
  // entries kept away from 0 and the clamp constant
  Tensor away = random_tensor(r, c, rng, 0.2, 1.0);
  for (std::size_t i = 0; i < away.size(); ++i) away[i] *= (i % 2 ? -1.0 : 1.0);

  const double tol = 1e-6;
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, matmul(v[0], v[1])); },
                         {a, w}),
            tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, add(v[0], v[1])); }, {a, b}),
            tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, sub(v[0], v[1])); }, {a, b}),
            tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, mul(v[0], v[1])); }, {a, b}),
            tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, tanh(v[0])); }, {a}), tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, sigmoid(v[0])); }, {a}),
            tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, exp(v[0])); }, {a}), tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, log(v[0])); }, {pos}), tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, abs(v[0])); }, {away}), tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, min_const(v[0], 0.1)); },
                         {away}),
            tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, max_const(v[0], 0.1)); },
                         {away}),
            tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, row_product(v[0])); }, {a}),
            tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return mse_loss(v[0], v[1]); }, {a, b}), tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, t.transpose(v[0])); }, {a}),
            tol);
  EXPECT_LT(max_fd_error([](Tape& t, const auto& v) { return probe(t, rsub_scalar(2.0, scale(v[0], 3.0))); },
                         {a}),
            tol);
  EXPECT_LT(max_fd_error(
                [](Tape& t, const auto& v) {
                  std::vector<Var> parts = {t.column(v[0], 0), v[1]};
                  return probe(t, t.concat_cols(parts));
                },
                {a, b}),
            tol);
  // composite: the kind of chain the cells build
  EXPECT_LT(max_fd_error(
                [](Tape& t, const auto& v) {
                  auto W = mul(tanh(v[1]), sigmoid(v[1]));
                  return probe(t, exp(matmul(log(abs(v[0])), W)));
                },
                {away, w}),
            1e-5);
}

INSTANTIATE_TEST_SUITE_P(RandomInstances, OpGradient, ::testing::Range(0, 25));
