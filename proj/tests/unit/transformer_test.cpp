#include <gtest/gtest.h>

#include "test_support.hpp"

namespace mssl::nn {
namespace {

using mssl::testing::random_matrix;

TransformerLayerConfig small_layer() { return {8, 2, 12, 0.0}; }

template <typename Module>
ParameterList<double> params_of(Module& m) {
  ParameterList<double> out;
  m.collect(out);
  return out;
}

TEST(TransformerLayer, PreservesShapeAndNormalizesColumns) {
  TransformerLayer<double> layer("t", small_layer());
  Rng rng(1);
  for (auto* p : params_of(layer)) p->initialize(rng);
  const auto x = random_matrix(8, 5, rng);
  const auto y = layer.forward(x);
  ASSERT_EQ(y.rows(), 8);
  ASSERT_EQ(y.cols(), 5);
  for (Eigen::Index c = 0; c < 5; ++c) EXPECT_LT(std::abs(y.col(c).mean()), 1e-5);
}

TEST(TransformerLayer, DefaultsFollowStandardConventions) {
  TransformerLayerConfig cfg;
  EXPECT_EQ(cfg.hidden, 384);
  EXPECT_EQ(cfg.resolved_ff(), 4 * 384);
  EXPECT_EQ(cfg.dropout, 0.0);
  EXPECT_THROW((TransformerLayerConfig{10, 3, 0, 0.0}.validate()), ConfigError);
}

TEST(TransformerLayer, ForwardIsDeterministic) {
  TransformerLayer<float> layer("t", {8, 2, 0, 0.0});
  Rng rng(2);
  ParameterList<float> ps;
  layer.collect(ps);
  for (auto* p : ps) p->initialize(rng);
  const auto x = mssl::testing::random_matrix<float>(8, 6, rng);
  EXPECT_EQ(layer.forward(x), layer.forward(x));
}

TEST(TransformerLayer, WrongWidthIsAShapeError) {
  TransformerLayer<double> layer("t", small_layer());
  EXPECT_THROW(layer.forward(Mat<double>::Zero(7, 3)), ShapeError);
  EXPECT_THROW(layer.forward(Mat<double>::Zero(8, 0)), ShapeError);
}

TEST(TransformerLayer, GradientCheck) {
  TransformerLayer<double> layer("t", small_layer());
  Rng rng(3);
  auto ps = params_of(layer);
  for (auto* p : ps) p->initialize(rng);
  // Non-trivial layer-norm affine parameters and biases.
  for (auto* p : ps)
    if (p->init != Init::xavier) p->value += random_matrix(p->value.rows(), p->value.cols(), rng, 0.3);
  Mat<double> x = random_matrix(8, 5, rng);
  const Mat<double> r = random_matrix(8, 5, rng);
  auto loss = [&] { return layer.forward(x).cwiseProduct(r).sum(); };
  typename TransformerLayer<double>::Cache cache;
  layer.forward(x, cache);
  zero_grads(ps);
  const Mat<double> dx = layer.backward(cache, r);
  auto res = grad_check(loss, x, dx, 1e-6, "x");
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst << " a=" << res.worst_analytic << " n=" << res.worst_numeric;
  const auto pres = grad_check(loss, ps, 1e-6);
  EXPECT_LT(pres.max_rel_error, 1e-5) << pres.worst << " a=" << pres.worst_analytic << " n=" << pres.worst_numeric;
}

TEST(TransformerLayer, DropoutIsSeededAndInactiveWithoutRng) {
  TransformerLayer<double> layer("t", {8, 2, 12, 0.3});
  Rng init(4);
  for (auto* p : params_of(layer)) p->initialize(init);
  Rng rng(5);
  const auto x = random_matrix(8, 4, rng);
  typename TransformerLayer<double>::Cache c1, c2;
  Rng d1(9), d2(9);
  EXPECT_EQ(layer.forward(x, c1, &d1), layer.forward(x, c2, &d2));
  EXPECT_NE(layer.forward(x, c1, &d1), layer.forward(x));
  EXPECT_EQ(layer.forward(x), layer.forward(x));
}

TEST(TransformerLayer, GradientCheckWithDropoutMasks) {
  TransformerLayer<double> layer("t", {8, 2, 12, 0.25});
  Rng rng(6);
  auto ps = params_of(layer);
  for (auto* p : ps) p->initialize(rng);
  Mat<double> x = random_matrix(8, 4, rng);
  const Mat<double> r = random_matrix(8, 4, rng);
  auto loss = [&] {
    Rng d(17);  // same masks for every evaluation
    typename TransformerLayer<double>::Cache c;
    return layer.forward(x, c, &d).cwiseProduct(r).sum();
  };
  typename TransformerLayer<double>::Cache cache;
  Rng d(17);
  layer.forward(x, cache, &d);
  zero_grads(ps);
  const Mat<double> dx = layer.backward(cache, r);
  EXPECT_LT(grad_check(loss, x, dx, 1e-6, "x").max_rel_error, 1e-5);
  EXPECT_LT(grad_check(loss, ps, 1e-6).max_rel_error, 1e-5);
}

TEST(SequenceEncoder, GradientCheckIncludingPositions) {
  SequenceEncoder<double> enc("s", 5, 6, small_layer());
  Rng rng(7);
  auto ps = params_of(enc);
  for (auto* p : ps) p->initialize(rng);
  for (auto* p : ps) p->value += random_matrix(p->value.rows(), p->value.cols(), rng, 0.1);
  Mat<double> x = random_matrix(5, 4, rng);
  const Mat<double> r = random_matrix(8, 4, rng);
  auto loss = [&] { return enc.forward(x).cwiseProduct(r).sum(); };
  typename SequenceEncoder<double>::Cache cache;
  enc.forward(x, cache);
  zero_grads(ps);
  enc.backward(cache, r);
  const auto res = grad_check(loss, ps, 1e-6);
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
  EXPECT_THROW(enc.forward(Mat<double>::Zero(5, 7)), ShapeError);  // more positions than the table
}

}  // namespace
}  // namespace mssl::nn
