#include "protofew/num/adam.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace protofew::num {
namespace {

TEST(AdamTest, ZeroGradientLeavesParamsAndMoments) {
  Var<double> p(Tensor<double>({3}, {1.0, -2.0, 0.5}), true);
  Adam<double> opt({p}, {});
  const std::vector<Tensor<double>> g{Tensor<double>({3})};
  opt.step(g);
  EXPECT_EQ(p.value(), Tensor<double>({3}, {1.0, -2.0, 0.5}));
  EXPECT_EQ(opt.first_moments()[0], Tensor<double>({3}));
  EXPECT_EQ(opt.second_moments()[0], Tensor<double>({3}));
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(AdamTest, FirstStepMovesByLearningRateAgainstGradientSign) {
  Var<double> p(Tensor<double>({3}, 0.0), true);
  const double lr = 2e-4;
  Adam<double> opt({p}, {lr});
  const std::vector<Tensor<double>> g{Tensor<double>({3}, {0.3, -5.0, 1e-3})};
  opt.step(g);
  // At t=1 the bias corrections cancel: delta = -lr * g / (|g| + eps).
  for (std::size_t i = 0; i < 3; ++i) {
    const double gi = g[0][i];
    EXPECT_NEAR(p.value()[i], -lr * gi / (std::abs(gi) + 1e-8), 1e-18);
    EXPECT_NEAR(std::abs(p.value()[i]), lr, lr * 1e-5);
  }
}

TEST(AdamTest, MatchesScriptedRecurrence) {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Var<double> p(Tensor<double>({2}, {0.5, -1.0}), true);
  Adam<double> opt({p}, {lr, b1, b2, eps});
  const double grads[3][2] = {{0.2, -0.4}, {0.2, -0.4}, {-1.0, 0.05}};
  double ref[2] = {0.5, -1.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 3; ++t) {
    opt.step(std::vector{Tensor<double>({2}, {grads[t - 1][0], grads[t - 1][1]})});
    for (int i = 0; i < 2; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * grads[t - 1][i];
      v[i] = b2 * v[i] + (1 - b2) * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + eps);
      EXPECT_NEAR(p.value()[i], ref[i], 1e-15) << "t=" << t << " i=" << i;
    }
  }
  EXPECT_EQ(opt.step_count(), 3u);
}

TEST(AdamTest, ZeroLearningRateIsBitExactNoOp) {
  Var<float> p(Tensor<float>({2}, {0.123f, -7.5f}), true);
  Adam<float> opt({p}, {0.0});
  for (int i = 0; i < 5; ++i) opt.step(std::vector{Tensor<float>({2}, {1.0f, -3.0f})});
  EXPECT_EQ(p.value(), Tensor<float>({2}, {0.123f, -7.5f}));
}

TEST(AdamTest, ShapeDisagreementRejected) {
  Var<double> p(Tensor<double>({2}), true);
  Adam<double> opt({p}, {});
  EXPECT_THROW(opt.step(std::vector{Tensor<double>({3})}), ContractViolation);
  EXPECT_THROW(opt.step(std::vector<Tensor<double>>{}), ContractViolation);
}

}  // namespace
}  // namespace protofew::num
