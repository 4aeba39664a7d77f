#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

namespace mssl::nn {
namespace {

using mssl::testing::random_matrix;
using mssl::testing::random_vector;

TEST(Softmax, NormalizesAndIsShiftInvariant) {
  Rng rng(1);
  const Vec<double> x = random_vector(7, rng, 5.0);
  const auto p = softmax<double>(x);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  EXPECT_GE(p.minCoeff(), 0.0);
  const Vec<double> shifted = (x.array() + 1000.0).matrix();
  EXPECT_LT((softmax<double>(shifted) - p).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FcRelu, MatchesBruteForce) {
  Rng rng(2);
  const auto x = random_matrix(5, 4, rng), w = random_matrix(3, 5, rng), b = random_matrix(3, 1, rng);
  const auto y = fc_relu<double>(x, w, b);
  ASSERT_EQ(y.cols(), 4);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) {
      double s = b(i, 0);
      for (Eigen::Index k = 0; k < 5; ++k) s += w(i, k) * x(k, j);
      EXPECT_NEAR(y(i, j), std::max(0.0, s), 1e-12);
    }
}

TEST(FcRelu, ZeroInputGivesReluOfBias) {
  Mat<double> b(3, 1);
  b << -1.0, 0.5, 2.0;
  const auto y = fc_relu<double>(Mat<double>::Zero(4, 2), Mat<double>::Ones(3, 4), b);
  EXPECT_EQ(y.col(1), Vec<double>((Vec<double>(3) << 0.0, 0.5, 2.0).finished()));
}

TEST(FcRelu, GradientCheck) {
  Rng rng(3);
  Mat<double> x, w, b;
  // Redraw until every pre-activation is clear of the ReLU kink.
  do {
    x = random_matrix(5, 4, rng);
    w = random_matrix(3, 5, rng);
    b = random_matrix(3, 1, rng);
    Mat<double> pre = w * x;
    pre.colwise() += b.col(0);
    if (pre.cwiseAbs().minCoeff() > 0.05) break;
  } while (true);
  const Mat<double> r = random_matrix(3, 4, rng);
  auto loss = [&] { return fc_relu<double>(x, w, b).cwiseProduct(r).sum(); };
  const auto y = fc_relu<double>(x, w, b);
  Mat<double> dw = Mat<double>::Zero(3, 5), db = Mat<double>::Zero(3, 1);
  const Mat<double> dx = fc_relu_backward<double>(x, w, y, r, dw, db);
  auto res = grad_check(loss, x, dx, 1e-6, "x");
  res.merge(grad_check(loss, w, dw, 1e-6, "w"));
  res.merge(grad_check(loss, b, db, 1e-6, "b"));
  EXPECT_LT(res.max_rel_error, 1e-6) << res.worst;
}

TEST(LayerNorm, ColumnsAreStandardized) {
  Rng rng(4);
  const auto x = random_matrix(16, 5, rng, 3.0);
  const auto y = layer_norm<double>(x, Mat<double>::Ones(16, 1), Mat<double>::Zero(16, 1), nullptr);
  for (Eigen::Index c = 0; c < 5; ++c) {
    EXPECT_LT(std::abs(y.col(c).mean()), 1e-5);
    const double var = (y.col(c).array() - y.col(c).mean()).square().mean();
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
}

TEST(LayerNorm, GradientCheck) {
  Rng rng(5);
  Mat<double> x = random_matrix(6, 3, rng), g = random_matrix(6, 1, rng), b = random_matrix(6, 1, rng);
  const Mat<double> r = random_matrix(6, 3, rng);
  auto loss = [&] { return layer_norm<double>(x, g, b, nullptr).cwiseProduct(r).sum(); };
  LayerNormCache<double> cache;
  layer_norm<double>(x, g, b, &cache);
  Mat<double> dg = Mat<double>::Zero(6, 1), db = Mat<double>::Zero(6, 1);
  const Mat<double> dx = layer_norm_backward<double>(cache, g, r, dg, db);
  auto res = grad_check(loss, x, dx, 1e-6, "x");
  res.merge(grad_check(loss, g, dg, 1e-6, "gamma"));
  res.merge(grad_check(loss, b, db, 1e-6, "beta"));
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
}

TEST(AttentionPool, SingleColumnIsReturned) {
  Rng rng(6);
  const auto x = random_matrix(6, 1, rng), w = random_matrix(6, 1, rng);
  const auto p = attention_pool<double>(x, w);
  EXPECT_NEAR(p.weights(0), 1.0, 1e-15);
  EXPECT_LT((p.pooled - x.col(0)).norm(), 1e-15);
}

TEST(AttentionPool, ZeroWeightGivesMean) {
  Rng rng(7);
  const auto x = random_matrix(6, 4, rng);
  const auto p = attention_pool<double>(x, Mat<double>::Zero(6, 1));
  EXPECT_LT((p.pooled - x.rowwise().mean()).norm(), 1e-12);
}

TEST(AttentionPool, MatchesSoftmaxWeightedSumOracle) {
  Rng rng(8);
  const auto x = random_matrix(6, 4, rng), w = random_matrix(6, 1, rng);
  const auto p = attention_pool<double>(x, w);
  double z = 0;
  std::vector<double> e(4);
  for (int i = 0; i < 4; ++i) z += (e[static_cast<std::size_t>(i)] = std::exp(x.col(i).dot(w.col(0))));
  Vec<double> oracle = Vec<double>::Zero(6);
  for (int i = 0; i < 4; ++i) oracle += e[static_cast<std::size_t>(i)] / z * x.col(i);
  EXPECT_LT((p.pooled - oracle).norm(), 1e-12);
  EXPECT_NEAR(p.weights.sum(), 1.0, 1e-12);
}

TEST(AttentionPool, GradientCheck) {
  Rng rng(9);
  Mat<double> x = random_matrix(6, 4, rng), w = random_matrix(6, 1, rng);
  const Vec<double> r = random_vector(6, rng);
  auto loss = [&] { return attention_pool<double>(x, w).pooled.dot(r); };
  const auto fwd = attention_pool<double>(x, w);
  Mat<double> dw = Mat<double>::Zero(6, 1);
  const Mat<double> dx = attention_pool_backward<double>(x, w, fwd, r, dw);
  auto res = grad_check(loss, x, dx, 1e-6, "x");
  res.merge(grad_check(loss, w, dw, 1e-6, "w"));
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
}

TEST(AttentionPool, EmptySequenceIsAnError) {
  EXPECT_THROW(attention_pool<double>(Mat<double>(4, 0), Mat<double>::Zero(4, 1)), ShapeError);
}

TEST(Cosine, KnownValues) {
  Vec<double> a(3), b(3);
  a << 1, 2, 3;
  b << -2, 1, 0;
  EXPECT_NEAR(cosine<double>(a, a), 1.0, 1e-15);
  EXPECT_NEAR(cosine<double>(a, b), 0.0, 1e-15);
  EXPECT_NEAR(cosine<double>(a, Vec<double>(-a)), -1.0, 1e-15);
  EXPECT_EQ(cosine<double>(a, b), cosine<double>(b, a));
}

TEST(Cosine, ZeroVectorGivesZeroAndCountsIncident) {
  const auto before = zero_norm_cosine_count().load();
  Vec<double> a = Vec<double>::Zero(3), b = Vec<double>::Ones(3);
  EXPECT_EQ(cosine<double>(a, b), 0.0);
  EXPECT_EQ(zero_norm_cosine_count().load(), before + 1);
  Vec<double> da = Vec<double>::Zero(3);
  cosine_backward<double>(a, b, 1.0, &da, nullptr);
  EXPECT_TRUE(da.isZero(0));
}

TEST(Cosine, GradientCheck) {
  Rng rng(10);
  Mat<double> a = random_matrix(5, 1, rng), b = random_matrix(5, 1, rng);
  auto loss = [&] { return 1.7 * cosine<double>(a.col(0), b.col(0)); };
  Vec<double> da = Vec<double>::Zero(5), db = Vec<double>::Zero(5);
  cosine_backward<double>(a.col(0), b.col(0), 1.7, &da, &db);
  auto res = grad_check(loss, a, Mat<double>(da), 1e-6, "a");
  res.merge(grad_check(loss, b, Mat<double>(db), 1e-6, "b"));
  EXPECT_LT(res.max_rel_error, 1e-6) << res.worst;
}

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / 1.1, 1e-14);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0), 1e-9 / 1e-8);
}

TEST(GradCheck, NonFiniteLossIsReported) {
  Mat<double> x = Mat<double>::Ones(1, 1);
  auto loss = [&] { return std::log(x(0, 0) - 1.0); };
  EXPECT_THROW(grad_check(loss, x, Mat<double>::Zero(1, 1)), NumericError);
}

}  // namespace
}  // namespace mssl::nn
