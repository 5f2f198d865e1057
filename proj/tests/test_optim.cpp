#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "convctc/optim.hpp"

using namespace convctc;

namespace {

ParameterSet<double> scalar_set(double w, double b = 0.0) {
  ParameterSet<double> p;
  p.entries.push_back({"layer0.weight", ParamClass::weight, 0, Tensor<double>({1}, w)});
  p.entries.push_back({"layer0.bias", ParamClass::bias, 0, Tensor<double>({1}, b)});
  p.entries.push_back({"layer0.slope", ParamClass::slope, 0, Tensor<double>({1}, 0.1)});
  return p;
}

std::vector<ParamShape> big_shapes() {
  return {{"layer0.weight", ParamClass::weight, 0, {1000, 1000}},
          {"layer0.bias", ParamClass::bias, 0, {1000}},
          {"layer0.slope", ParamClass::slope, 0, {3}}};
}

}  // namespace

TEST(Init, BoundsMeanAndClasses) {
  std::mt19937_64 rng(1);
  const auto p = init_uniform<double>(big_shapes(), rng);
  const auto& w = p[0].value;
  double lo = 1, hi = -1, mean = 0;
  for (double v : w.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mean += v;
  }
  mean /= static_cast<double>(w.size());
  EXPECT_GE(lo, -0.05);
  EXPECT_LE(hi, 0.05);
  // sd of the mean of 1e6 U(-0.05, 0.05) draws
  const double sigma = 0.1 / std::sqrt(12.0) / 1000.0;
  EXPECT_LE(std::abs(mean), 3 * sigma);
  for (double v : p[1].value.data()) EXPECT_EQ(v, 0.0);
  for (double v : p[2].value.data()) EXPECT_DOUBLE_EQ(v, 0.1);
}

TEST(Init, Deterministic) {
  std::mt19937_64 r1(9), r2(9);
  const auto a = init_uniform<float>(big_shapes(), r1);
  const auto b = init_uniform<float>(big_shapes(), r2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value, b[i].value);
}

TEST(Adam, ZeroGradientFirstStep) {
  auto p = scalar_set(0.7, 0.2);
  auto s = OptimizerState<double>::fresh(stage_defaults(Stage::adam), p);
  adam_step(p, p.zeros_like(), s);
  EXPECT_EQ(p[0].value[0], 0.7);
  EXPECT_EQ(p[1].value[0], 0.2);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepIsLearningRate) {
  auto p = scalar_set(0.0);
  auto g = p.zeros_like();
  g[0].value[0] = 1.0;
  const auto cfg = stage_defaults(Stage::adam);
  auto s = OptimizerState<double>::fresh(cfg, p);
  adam_step(p, g, s);
  EXPECT_NEAR(p[0].value[0], -cfg.lr / (1.0 + cfg.eps), 1e-18);
}

TEST(Adam, DeterministicTrajectories) {
  auto run = [] {
    auto p = scalar_set(1.0, -1.0);
    auto s = OptimizerState<double>::fresh(stage_defaults(Stage::adam), p);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    for (int i = 0; i < 50; ++i) {
      auto g = p.zeros_like();
      for (auto& e : g.entries) e.value[0] = n(rng);
      adam_step(p, g, s);
    }
    return p;
  };
  const auto a = run(), b = run();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].value, b[i].value);
}

TEST(Sgd, Arithmetic) {
  auto p = scalar_set(1.0, 1.0);
  auto s = OptimizerState<double>::fresh(stage_defaults(Stage::sgd), p);
  sgd_step(p, p.zeros_like(), s);
  EXPECT_EQ(p[0].value[0], 1.0 - 1e-5 * 1e-5);
  // L2 never touches biases or slopes
  EXPECT_EQ(p[1].value[0], 1.0);
  EXPECT_EQ(p[2].value[0], 0.1);

  auto q = scalar_set(1.0);
  OptimizerConfig plain = stage_defaults(Stage::sgd);
  plain.l2 = 0;
  auto s2 = OptimizerState<double>::fresh(plain, q);
  sgd_step(q, q.zeros_like(), s2);
  EXPECT_EQ(q[0].value[0], 1.0);

  auto g = q.zeros_like();
  g[0].value[0] = 3.0;
  g[1].value[0] = -2.0;
  sgd_step(q, g, s2);
  EXPECT_EQ(q[0].value[0], 1.0 - plain.lr * 3.0);
  EXPECT_EQ(q[1].value[0], 0.0 + plain.lr * 2.0);
}

TEST(Adam, L2OnlyOnWeights) {
  auto p = scalar_set(1.0, 1.0);
  OptimizerConfig cfg = stage_defaults(Stage::adam);
  cfg.l2 = 0.5;
  auto s = OptimizerState<double>::fresh(cfg, p);
  adam_step(p, p.zeros_like(), s);
  EXPECT_LT(p[0].value[0], 1.0);
  EXPECT_EQ(p[1].value[0], 1.0);
  EXPECT_EQ(p[2].value[0], 0.1);
}

TEST(Optimizers, DecreaseConvexQuadratic) {
  // f(w) = 0.5 * sum_i c_i (w_i - t_i)^2
  const std::vector<double> c{1.0, 4.0, 0.5}, t{0.3, -0.2, 0.1};
  for (Stage stage : {Stage::adam, Stage::sgd}) {
    ParameterSet<double> p;
    p.entries.push_back({"layer0.weight", ParamClass::weight, 0, Tensor<double>({3}, {1.0, 1.0, -1.0})});
    OptimizerConfig cfg = stage_defaults(stage);
    cfg.l2 = 0;
    if (stage == Stage::sgd) cfg.lr = 0.1;  // 1e-5 moves too little to observe
    auto s = OptimizerState<double>::fresh(cfg, p);
    auto f = [&] {
      double v = 0;
      for (int i = 0; i < 3; ++i) v += 0.5 * c[i] * std::pow(p[0].value[i] - t[i], 2);
      return v;
    };
    double prev = f();
    for (int step = 0; step < 200; ++step) {
      auto g = p.zeros_like();
      for (int i = 0; i < 3; ++i) g[0].value[i] = c[i] * (p[0].value[i] - t[i]);
      optimizer_step(p, g, s);
      const double now = f();
      if (step >= 10) EXPECT_LT(now, prev) << to_string(stage) << " step " << step;
      prev = now;
    }
  }
}

TEST(Optimizers, ClipGlobalNorm) {
  auto g = scalar_set(3.0, 4.0);
  g[2].value[0] = 0.0;
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g[0].value[0], 0.6, 1e-15);
  EXPECT_NEAR(g[1].value[0], 0.8, 1e-15);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 10.0), 1.0);
  EXPECT_NEAR(g[0].value[0], 0.6, 1e-15);
}

TEST(Optimizers, StageDefaults) {
  EXPECT_EQ(stage_defaults(Stage::adam).lr, 1e-4);
  EXPECT_EQ(stage_defaults(Stage::adam).l2, 0.0);
  EXPECT_EQ(stage_defaults(Stage::sgd).lr, 1e-5);
  EXPECT_EQ(stage_defaults(Stage::sgd).l2, 1e-5);
  EXPECT_EQ(parse_stage("sgd"), Stage::sgd);
  EXPECT_THROW(parse_stage("rmsprop"), std::invalid_argument);
}
