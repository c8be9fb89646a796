#include "lap/optim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace lap;

TEST(Adam, ZeroGradientIsNoOp) {
  Tensord value(Shape{1, 1, 1, 3}, {0.5, -2.0, 7.0});
  const Tensord start = value;
  AdamMoments s;
  for (std::int64_t t = 1; t <= 50; ++t) {
    adam_update(value, Tensord(value.shape()), s, t, 0.1, AdamConfig{});
    EXPECT_EQ(value, start);
    EXPECT_TRUE((s.m.array() == 0).all());
    EXPECT_TRUE((s.v.array() == 0).all());
  }
}

TEST(Adam, FirstStepHandValue) {
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  Tensord value(Shape{1, 1, 1, 2}, {0.0, 1.0});
  const Tensord grad(Shape{1, 1, 1, 2}, {1.0, -3.0});
  AdamMoments s;
  adam_update(value, grad, s, 1, 0.1, AdamConfig{});
  EXPECT_NEAR(value[0], -0.1 * 1.0 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(value[1], 1.0 + 0.1 * 3.0 / (3.0 + 1e-8), 1e-15);
}

TEST(Adam, SecondIdenticalStepHandValue) {
  Tensord value(Shape{1, 1, 1, 1}, {0.0});
  const Tensord grad(Shape{1, 1, 1, 1}, {2.0});
  AdamMoments s;
  adam_update(value, grad, s, 1, 0.01, AdamConfig{});
  const double after_one = value[0];
  adam_update(value, grad, s, 2, 0.01, AdamConfig{});
  // m = 0.19 * 2 / 0.19 and v = 0.001999 * 4 / 0.001999 after correction: the step is again lr * g / (|g| + eps).
  EXPECT_LT(value[0], after_one);
  EXPECT_NEAR(value[0] - after_one, -0.01 * 2.0 / (2.0 + 1e-8), 1e-12);
  EXPECT_NEAR(s.m[0], 0.9 * 0.2 + 0.2, 1e-15);
  EXPECT_NEAR(s.v[0], 0.999 * 0.004 + 0.004, 1e-15);
}

TEST(Adam, OptimizerWalksTrainableEntriesOnly) {
  Tensord w(Shape{1, 1, 1, 2}, {1.0, 1.0}), gw(Shape{1, 1, 1, 2}, {1.0, -1.0});
  Tensord buffer(Shape{1, 1, 1, 1}, {5.0});
  Adam opt(AdamConfig{0.5});
  const ParamList params{{"w", &w, &gw}, {"running", &buffer, nullptr}};
  opt.step(params);
  EXPECT_EQ(opt.steps(), 1);
  EXPECT_EQ(opt.moments().size(), 1u);
  EXPECT_NEAR(w[0], 0.5, 1e-7);
  EXPECT_NEAR(w[1], 1.5, 1e-7);
  EXPECT_EQ(buffer[0], 5.0);
  opt.set_lr(0.0);
  opt.step(params);
  EXPECT_NEAR(w[0], 0.5, 1e-7);
}

TEST(Plateau, ImprovingKeepsRate) {
  PlateauScheduler s(2.5e-4, PlateauConfig{});
  for (double loss : {1.0, 0.9, 0.8}) EXPECT_EQ(s.step(loss), 2.5e-4);
  EXPECT_EQ(s.bad_epochs(), 0);
}

TEST(Plateau, FiveFlatEpochsReduceToFiveEMinusFive) {
  PlateauScheduler s(2.5e-4, PlateauConfig{0.2, 5, 1e-6});
  EXPECT_EQ(s.step(1.0), 2.5e-4);  // first epoch sets the best
  for (int i = 1; i <= 4; ++i) {
    EXPECT_EQ(s.step(1.0), 2.5e-4) << i;
    EXPECT_EQ(s.bad_epochs(), i);
  }
  EXPECT_EQ(s.step(1.0), 5.0e-5);
  EXPECT_EQ(s.reductions(), 1);
  EXPECT_EQ(s.bad_epochs(), 0);  // counter restarts
}

TEST(Plateau, ReductionsCompoundFromInitialRate) {
  PlateauScheduler s(2.5e-4, PlateauConfig{0.2, 2, 1e-6});
  s.step(1.0);
  double prev = s.lr();
  for (int k = 1; k <= 6; ++k) {
    s.step(1.0);
    s.step(1.0);
    EXPECT_EQ(s.lr(), 2.5e-4 * std::pow(0.2, k));
    EXPECT_LE(s.lr(), prev);
    prev = s.lr();
  }
}

TEST(Plateau, TinyImprovementsDoNotCount) {
  PlateauScheduler s(1.0, PlateauConfig{0.5, 3, 1e-3});
  s.step(1.0);
  s.step(0.9995);
  s.step(0.9991);
  EXPECT_EQ(s.step(0.99905), 0.5);
  EXPECT_EQ(s.best(), 1.0);
}

TEST(Plateau, RejectsBadInputs) {
  EXPECT_THROW(PlateauScheduler(1.0, PlateauConfig{1.0, 5, 0}), std::invalid_argument);
  EXPECT_THROW(PlateauScheduler(1.0, PlateauConfig{0.2, 0, 0}), std::invalid_argument);
  PlateauScheduler s(1.0, PlateauConfig{});
  EXPECT_THROW(s.step(std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
}
