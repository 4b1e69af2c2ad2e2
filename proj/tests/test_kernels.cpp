#include <cmath>

#include <gtest/gtest.h>

#include "hlogformer/gradcheck.hpp"
#include "hlogformer/kernels.hpp"
#include "hlogformer/optimizer.hpp"

using namespace hlog;

namespace {

Matrix<double> random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix<double> m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = standard_normal(rng);
  return m;
}

}  // namespace

TEST(Kernels, MatmulAgainstNaive) {
  Rng rng(1);
  const auto a = random_matrix(5, 7, rng), b = random_matrix(7, 3, rng);
  const auto c = kernels::matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double ref = 0;
      for (std::size_t k = 0; k < 7; ++k) ref += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), ref, 1e-12);
    }
  Matrix<double> tn(7, 3);
  const auto a2 = random_matrix(5, 7, rng), b2 = random_matrix(5, 3, rng);
  kernels::matmul_tn_acc(a2, b2, tn);
  const auto ref = kernels::matmul(kernels::transpose(a2), b2);
  for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn[i], ref[i], 1e-12);
}

TEST(Kernels, Softmax) {
  auto s = kernels::softmax_rows(Matrix<double>(1, 3, {0, 0, 0}));
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s[j], 1.0 / 3, 1e-15);
  s = kernels::softmax_rows(Matrix<double>(1, 2, {1000, 0}));
  EXPECT_NEAR(s[0], 1.0, 1e-15);
  EXPECT_TRUE(std::isfinite(s[1]));
  s = kernels::softmax_rows(Matrix<double>(1, 2, {std::log(2.0), 0}));
  EXPECT_NEAR(s[0], 2.0 / 3, 1e-15);
  EXPECT_NEAR(s[1], 1.0 / 3, 1e-15);
}

TEST(Kernels, LayerNorm) {
  const std::vector<double> one{1, 1, 1}, zero{0, 0, 0};
  auto y = kernels::layer_norm<double>(std::vector<double>{1, 2, 3}, one, zero, 0.0);
  EXPECT_NEAR(y[0], -std::sqrt(1.5), 1e-12);  // (1-2)/sqrt(2/3)
  EXPECT_NEAR(y[1], 0.0, 1e-12);
  EXPECT_NEAR(y[2], 1.22474487, 1e-8);
  y = kernels::layer_norm<double>(std::vector<double>{5, 5, 5}, one, zero, 1e-5);
  for (double v : y) EXPECT_EQ(v, 0.0);
  const std::vector<double> x{-1, 1}, two{2, 2}, ones{1, 1};
  y = kernels::layer_norm<double>(x, two, ones, 0.0);
  EXPECT_NEAR(y[0], -1.0, 1e-12);
  EXPECT_NEAR(y[1], 3.0, 1e-12);
}

TEST(Kernels, CrossEntropy) {
  Matrix<double> uniform(1, 8, 0.0);
  EXPECT_NEAR(kernels::cross_entropy(uniform, std::vector<int>{3}), std::log(8.0), 1e-12);
  Matrix<double> peaked(1, 8, 0.0);
  peaked(0, 2) = 30;
  EXPECT_NEAR(kernels::cross_entropy(peaked, std::vector<int>{2}), 0.0, 1e-12);
  EXPECT_NEAR(kernels::cross_entropy(Matrix<double>(1, 2, {1, 0}), std::vector<int>{0}),
              std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(kernels::cross_entropy(Matrix<double>(1, 2, {1, 0}), std::vector<int>{0}), 0.31326, 1e-5);
  EXPECT_THROW(kernels::cross_entropy(uniform, std::vector<int>{8}), Error);
}

TEST(Kernels, CrossEntropyGradient) {
  Rng rng(2);
  const auto logits = random_matrix(3, 5, rng);
  const std::vector<int> targets{0, 4, 2};
  LossFn f = [&](const std::vector<Matrix<double>>& p, std::vector<Matrix<double>>* g) {
    Matrix<double> grad;
    const double l = kernels::cross_entropy(p[0], targets, g ? &grad : nullptr);
    if (g) (*g)[0] = grad;
    return l;
  };
  EXPECT_LT(grad_check(f, {logits}, 15, 1e-6, 1).max_rel_error, 1e-6);
}

TEST(Kernels, LayerNormGradient) {
  Rng rng(3);
  const auto x = random_matrix(4, 6, rng), scale = random_matrix(1, 6, rng), shift = random_matrix(1, 6, rng);
  const auto weights = random_matrix(4, 6, rng);
  LossFn f = [&](const std::vector<Matrix<double>>& p, std::vector<Matrix<double>>* g) {
    kernels::LayerNormCache<double> cache;
    const auto y = kernels::layer_norm_rows(p[0], p[1], p[2], 1e-5, &cache);
    double l = 0;
    for (std::size_t i = 0; i < y.size(); ++i) l += y[i] * weights[i];
    if (g) (*g)[0] = kernels::layer_norm_rows_backward(weights, cache, p[1], (*g)[1], (*g)[2]);
    return l;
  };
  EXPECT_LT(grad_check(f, {x, scale, shift}, 30, 1e-6, 2).max_rel_error, 1e-6);
}

TEST(Kernels, GeluDerivative) {
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    const double numeric = (kernels::gelu(x + 1e-6) - kernels::gelu(x - 1e-6)) / 2e-6;
    EXPECT_NEAR(kernels::gelu_grad(x), numeric, 1e-8);
  }
  EXPECT_NEAR(kernels::gelu(1.0), 0.8413447460685429, 1e-12);
}

TEST(Optimizer, AdamSteps) {
  std::vector<Matrix<double>> p{Matrix<double>(1, 1, {1.0})};
  AdamW<double> none({.lr = 0.01, .weight_decay = 0.0}, p);
  none.step(p, {Matrix<double>(1, 1, {0.0})});
  EXPECT_EQ(p[0][0], 1.0);

  AdamW<double> decay({.lr = 0.001, .weight_decay = 0.01}, p);
  decay.step(p, {Matrix<double>(1, 1, {0.0})});
  EXPECT_DOUBLE_EQ(p[0][0], 1.0 - 0.001 * 0.01);

  std::vector<Matrix<double>> q{Matrix<double>(1, 1, {0.5})};
  AdamW<double> adam({.lr = 0.01, .weight_decay = 0.0}, q);
  adam.step(q, {Matrix<double>(1, 1, {1.0})});
  EXPECT_NEAR(q[0][0] - 0.5, -0.01, 1e-9);
}

TEST(Optimizer, NonFiniteGradientNamesTensor) {
  std::vector<Matrix<double>> p{Matrix<double>(1, 2)};
  AdamW<double> opt({}, p);
  try {
    opt.step(p, {Matrix<double>(1, 2, {0.0, NAN})}, {"block0.wq"});
    FAIL();
  } catch (const NonFiniteGradient& e) {
    EXPECT_EQ(e.param(), "block0.wq");
    EXPECT_EQ(e.kind(), ErrorKind::Numeric);
  }
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(GradCheck, QuadraticAndSkipFilter) {
  LossFn quad = [](const std::vector<Matrix<double>>& p, std::vector<Matrix<double>>* g) {
    if (g) (*g)[0][0] = p[0][0];
    return 0.5 * p[0][0] * p[0][0];
  };
  const auto r = grad_check(quad, {Matrix<double>(1, 1, {3.0})}, 1, 1e-5, 0);
  ASSERT_EQ(r.probes.size(), 1u);
  EXPECT_NEAR(r.probes[0].analytic, 3.0, 1e-12);
  EXPECT_NEAR(r.probes[0].numeric, 3.0, 1e-8);

  // ReLU at its kink: finite differences give 0.5, so the probe is excluded.
  LossFn relu = [](const std::vector<Matrix<double>>& p, std::vector<Matrix<double>>* g) {
    if (g) (*g)[0][0] = p[0][0] > 0 ? 1.0 : 0.0;
    return std::max(0.0, p[0][0]);
  };
  const Matrix<double> kink(1, 1, {0.0});
  EXPECT_GT(grad_check(relu, {kink}, 1, 1e-5, 0).max_rel_error, 0.4);
  const auto skipped = grad_check(relu, {kink}, 1, 1e-5, 0, [&](std::size_t, std::size_t) { return true; });
  EXPECT_TRUE(skipped.probes.empty());
}
