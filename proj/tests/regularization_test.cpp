#include <gtest/gtest.h>

#include <random>

#include "inalu/errors.hpp"
#include "inalu/regularization.hpp"
#include "test_util.hpp"

using namespace inalu;

TEST(RegTerm, HandValues) {
  EXPECT_DOUBLE_EQ(reg_term(0.0, 20.0), 1.0);
  EXPECT_DOUBLE_EQ(reg_term(-10.0, 20.0), 0.5);
  EXPECT_DOUBLE_EQ(reg_term(5.0, 20.0), 0.75);
  EXPECT_DOUBLE_EQ(reg_term(20.0, 20.0), 0.0);
  EXPECT_DOUBLE_EQ(reg_term(-35.0, 20.0), 0.0);
}

TEST(RegTerm, SlopePushesAwayFromZero) {
  EXPECT_DOUBLE_EQ(reg_term_slope(3.0, 20.0), -0.05);
  EXPECT_DOUBLE_EQ(reg_term_slope(-3.0, 20.0), 0.05);
  EXPECT_DOUBLE_EQ(reg_term_slope(0.0, 20.0), 0.0);
  EXPECT_DOUBLE_EQ(reg_term_slope(25.0, 20.0), 0.0);
}

TEST(RegTerm, NonNegativeAndZeroOnceSaturated) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(-50, 50);
  for (int i = 0; i < 1000; ++i) {
    const double w = d(rng);
    EXPECT_GE(reg_term(w, 20.0), 0.0);
    EXPECT_LE(reg_term(w, 20.0), 1.0);
    if (std::abs(w) >= 20.0) EXPECT_EQ(reg_term(w, 20.0), 0.0);
  }
}

TEST(TotalReg, TapeMatchesScalarSumAndGradient) {
  std::mt19937_64 rng(4);
  for (CellVariant v : kAllVariants) {
    CellParams p = CellParams::zeros(v, 3, 2);
    for (auto& [n, t] : p.named()) *t = testutil::random_tensor(t->rows(), t->cols(), rng, -30, 30);
    Model model = {p};
    RegConfig cfg;
    double manual = 0.0;
    for (const auto& [n, t] : p.named())
      for (double w : t->values()) manual += reg_term(w, cfg.t);
    EXPECT_NEAR(total_reg(model, cfg), manual, 1e-12);

    ad::Tape tape;
    const auto cells = bind_params(tape, model, true);
    const auto r = total_reg(cells, cfg);
    EXPECT_NEAR(r.value().item(), manual, 1e-12);
    tape.backward(r);
    const auto vars = cells[0].distinct();
    const auto named = p.named();
    for (std::size_t k = 0; k < vars.size(); ++k)
      for (std::size_t i = 0; i < named[k].second->size(); ++i) {
        const double w = (*named[k].second)[i];
        if (std::abs(std::abs(w) - cfg.t) > 1e-9) {
          EXPECT_DOUBLE_EQ(vars[k].grad()[i], reg_term_slope(w, cfg.t));
        }
      }
  }
}

TEST(Activation, EpochAndLossGate) {
  RegConfig cfg;
  EXPECT_FALSE(reg_active(10, 0.5, cfg));
  EXPECT_TRUE(reg_active(11, 0.5, cfg));
  EXPECT_FALSE(reg_active(11, 1.0, cfg));
  EXPECT_FALSE(reg_active(50, 3.0, cfg));
  EXPECT_FALSE(reg_active(50, std::nan(""), cfg));
}

TEST(Config, Validation) {
  RegConfig cfg;
  cfg.t = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = RegConfig{};
  cfg.scale = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
