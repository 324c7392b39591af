#include <gtest/gtest.h>

#include <cmath>

#include "zfusion/adamw.hpp"
#include "zfusion/tensor.hpp"

using zfusion::AdamW;
using zfusion::AdamWConfig;
using zfusion::Tensor;

TEST(AdamW, ZeroGradZeroDecayLeavesParamsUntouched) {
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  Tensor p({3});
  p[0] = 1.0;
  p[1] = -2.0;
  p[2] = 0.5;
  Tensor g = Tensor::zeros_like(p);
  AdamW opt(cfg, {&p});
  for (int i = 0; i < 10; ++i) opt.step({&p}, {&g});
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_DOUBLE_EQ(p[1], -2.0);
  EXPECT_DOUBLE_EQ(p[2], 0.5);
}

TEST(AdamW, FirstStepMatchesHandComputation) {
  // theta=1, g=1, lr=0.1, wd=0: mhat=1, vhat=1 after bias correction,
  // so the update is lr/(1+eps) and theta lands at ~0.9.
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  Tensor p({1});
  p[0] = 1.0;
  Tensor g({1});
  g[0] = 1.0;
  AdamW opt(cfg, {&p});
  opt.step({&p}, {&g});
  EXPECT_NEAR(p[0], 0.9, 1e-6);
  EXPECT_EQ(opt.step_count(), 1);
}

TEST(AdamW, DecoupledDecayUsesPreUpdateParam) {
  // with wd the extra term is lr*wd*theta_old = 0.1*0.01*1 = 1e-3
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  Tensor p({1});
  p[0] = 1.0;
  Tensor g({1});
  g[0] = 1.0;
  AdamW opt(cfg, {&p});
  opt.step({&p}, {&g});
  EXPECT_NEAR(p[0], 0.899, 1e-6);
}

TEST(AdamW, DrivesQuadraticTowardZero) {
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  Tensor p({1});
  p[0] = 1.0;
  AdamW opt(cfg, {&p});
  for (int i = 0; i < 100; ++i) {
    Tensor g({1});
    g[0] = 2.0 * p[0];  // d/dp p^2
    opt.step({&p}, {&g});
  }
  EXPECT_LT(std::abs(p[0]), 0.5);
}

TEST(AdamW, RejectsMismatchedParamList) {
  AdamWConfig cfg;
  Tensor a({2}), b({3});
  AdamW opt(cfg, {&a});
  Tensor ga = Tensor::zeros_like(a);
  Tensor gb = Tensor::zeros_like(b);
  EXPECT_THROW(opt.step({&a, &b}, {&ga, &gb}), zfusion::ArgumentError);
  EXPECT_THROW(opt.step({&b}, {&gb}), zfusion::ShapeError);
}
