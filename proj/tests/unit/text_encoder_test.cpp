#include <gtest/gtest.h>

#include "test_support.hpp"

namespace mssl {
namespace {

using testing::random_matrix;

template <typename T>
nn::ParameterList<T> params_of(TextEncoder<T>& e) {
  nn::ParameterList<T> out;
  e.collect(out);
  return out;
}

TEST(TextEncoder, PaperScaleShapes) {
  TextEncoder<float> enc(768, 30, nn::TransformerLayerConfig{});
  Rng rng(1);
  for (auto* p : params_of(enc)) p->initialize(rng);
  const auto emb = enc.encode(random_matrix<float>(768, 12, rng));
  EXPECT_EQ(emb.words.rows(), 384);
  EXPECT_EQ(emb.words.cols(), 12);
  EXPECT_EQ(emb.sentence.size(), 384);
}

TEST(TextEncoder, WordsBeyondCapAreDiscarded) {
  TextEncoder<float> enc(16, 30, {16, 2, 0, 0.0});
  Rng rng(2);
  for (auto* p : params_of(enc)) p->initialize(rng);
  const auto words = random_matrix<float>(16, 40, rng);
  const auto full = enc.encode(words);
  const auto first = enc.encode(Mat<float>(words.leftCols(30)));
  EXPECT_EQ(full.words.cols(), 30);
  EXPECT_EQ(full.sentence, first.sentence);
}

TEST(TextEncoder, DeterministicAndConvex) {
  TextEncoder<double> enc(6, 10, {8, 2, 0, 0.0});
  Rng rng(3);
  for (auto* p : params_of(enc)) p->initialize(rng);
  const auto words = random_matrix(6, 7, rng);
  const auto a = enc.encode(words), b = enc.encode(words);
  EXPECT_EQ(a.sentence, b.sentence);
  EXPECT_NEAR(a.pool_weights.sum(), 1.0, 1e-12);
  EXPECT_GE(a.pool_weights.minCoeff(), 0.0);
  EXPECT_LT((a.words * a.pool_weights - a.sentence).norm(), 1e-12);
}

TEST(TextEncoder, BadInputsAreShapeErrors) {
  TextEncoder<double> enc(6, 10, {8, 2, 0, 0.0});
  EXPECT_THROW(enc.encode(Mat<double>::Zero(5, 3)), ShapeError);
  EXPECT_THROW(enc.encode(Mat<double>::Zero(6, 0)), ShapeError);
}

TEST(TextEncoder, GradientCheckOfAllParameters) {
  TextEncoder<double> enc(5, 10, {8, 2, 12, 0.0});
  Rng rng(4);
  auto ps = params_of(enc);
  for (auto* p : ps) p->initialize(rng);
  for (auto* p : ps) p->value += random_matrix(p->value.rows(), p->value.cols(), rng, 0.1);
  const auto words = random_matrix(5, 6, rng);
  const Vec<double> r = testing::random_vector(8, rng);
  auto loss = [&] { return enc.encode(words).sentence.dot(r); };
  typename TextEncoder<double>::Cache cache;
  enc.encode(words, cache);
  nn::zero_grads(ps);
  enc.backward(cache, r);
  const auto res = nn::grad_check(loss, ps, 1e-6);
  EXPECT_LT(res.max_rel_error, 1e-4) << res.worst;
}

}  // namespace
}  // namespace mssl
