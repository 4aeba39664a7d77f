#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

namespace mssl {
namespace {

using testing::random_matrix;
using testing::random_vector;

TEST(ClipSimilarity, MaxCosineAndSmallestIndexOnTies) {
  Mat<double> clips(2, 4);
  clips << 1, 0, 2, -1,  //
      0, 1, 0, 0;
  Vec<double> q(2);
  q << 1, 0;
  const auto m = clip_similarity<double>(clips, q);
  EXPECT_DOUBLE_EQ(m.score, 1.0);
  EXPECT_EQ(m.key_index, 0u);  // columns 0 and 2 tie
  EXPECT_THROW(clip_similarity<double>(Mat<double>(2, 0), q), ShapeError);
}

TEST(ClipSimilarity, MatchesBruteForce) {
  Rng rng(1);
  const auto clips = random_matrix(6, 21, rng);
  const Vec<double> q = random_vector(6, rng);
  double best = -2;
  std::size_t arg = 0;
  for (Eigen::Index i = 0; i < clips.cols(); ++i) {
    const double c = clips.col(i).dot(q) / (clips.col(i).norm() * q.norm());
    if (c > best) {
      best = c;
      arg = static_cast<std::size_t>(i);
    }
  }
  const auto m = clip_similarity<double>(clips, q);
  EXPECT_NEAR(m.score, best, 1e-14);
  EXPECT_EQ(m.key_index, arg);
}

TEST(Kcga, MatchesSoftmaxOracleAndWeightsNormalize) {
  Rng rng(2);
  const auto f = random_matrix(5, 7, rng), wk = random_matrix(5, 5, rng, 0.4), wv = random_matrix(5, 5, rng, 0.4);
  const Vec<double> c = random_vector(5, rng);
  const auto r = kcga<double>(f, c, {wk, wv});
  EXPECT_NEAR(r.weights.sum(), 1.0, 1e-12);
  EXPECT_GE(r.weights.minCoeff(), 0.0);
  // Oracle: literal r = softmax(c^T W_k F) (W_v F)^T, unscaled.
  const Eigen::RowVectorXd logits = c.transpose() * (wk * f);
  const Eigen::RowVectorXd e = (logits.array() - logits.maxCoeff()).exp();
  const Vec<double> oracle = (wv * f) * (e / e.sum()).transpose();
  EXPECT_LT((r.aggregated - oracle).norm(), 1e-12);
  const auto scaled = kcga<double>(f, c, {wk, wv}, true);
  const Eigen::RowVectorXd es = ((logits.array() - logits.maxCoeff()) / std::sqrt(5.0)).exp();
  EXPECT_LT((scaled.weights - (es / es.sum()).transpose()).norm(), 1e-12);
}

TEST(Kcga, KeyClipEqualToAFrameKeyFavorsThatFrame) {
  Mat<double> f = Mat<double>::Identity(4, 4) * 5.0;
  const Mat<double> eye = Mat<double>::Identity(4, 4);
  const Vec<double> c = f.col(2);
  const auto r = kcga<double>(f, c, {eye, eye});
  Eigen::Index arg;
  r.weights.maxCoeff(&arg);
  EXPECT_EQ(arg, 2);
}

class KcgaGradient : public ::testing::TestWithParam<bool> {};

TEST_P(KcgaGradient, GradientCheck) {
  const bool scaled = GetParam();
  Rng rng(3);
  Mat<double> f = random_matrix(5, 6, rng), wk = random_matrix(5, 5, rng, 0.4), wv = random_matrix(5, 5, rng, 0.4);
  Mat<double> c = random_matrix(5, 1, rng);
  const Vec<double> g = random_vector(5, rng);
  auto loss = [&] { return kcga<double>(f, c.col(0), {wk, wv}, scaled).aggregated.dot(g); };
  const auto fwd = kcga<double>(f, c.col(0), {wk, wv}, scaled);
  Mat<double> df = Mat<double>::Zero(5, 6), dwk = Mat<double>::Zero(5, 5), dwv = Mat<double>::Zero(5, 5);
  Vec<double> dc = Vec<double>::Zero(5);
  kcga_backward<double>(f, c.col(0), {wk, wv}, fwd, g, scaled, df, dwk, dwv, dc);
  auto res = nn::grad_check(loss, f, df, 1e-6, "F");
  res.merge(nn::grad_check(loss, wk, dwk, 1e-6, "Wk"));
  res.merge(nn::grad_check(loss, wv, dwv, 1e-6, "Wv"));
  res.merge(nn::grad_check(loss, c, Mat<double>(dc), 1e-6, "c"));
  EXPECT_LT(res.max_rel_error, 1e-5) << res.worst;
}

INSTANTIATE_TEST_SUITE_P(Scaling, KcgaGradient, ::testing::Values(false, true));

TEST(Fusion, Endpoints) {
  EXPECT_EQ(fused_similarity(0.3, 0.8, 1.0), 0.3);
  EXPECT_EQ(fused_similarity(0.3, 0.8, 0.0), 0.8);
  EXPECT_DOUBLE_EQ(fused_similarity(0.3, 0.8, 0.5), 0.55);
  EXPECT_THROW(fused_similarity(0.3, 0.8, 1.5), ConfigError);
  EXPECT_THROW(fused_similarity(0.3, 0.8, -0.1), ConfigError);
}

TEST(ScorePair, QueryScaleInvariance) {
  Model<double> model(testing::tiny_config(), 5);
  Rng rng(4);
  const auto views = model.encode_video(random_matrix(6, 9, rng));
  const Vec<double> q = random_vector(8, rng);
  const auto a = model.score(views, q, 0.4);
  const auto b = model.score(views, Vec<double>(q * 3.7), 0.4);
  EXPECT_NEAR(a.clip_score, b.clip_score, 1e-14);
  EXPECT_NEAR(a.frame_score, b.frame_score, 1e-14);
  EXPECT_EQ(a.key_index, b.key_index);
  ASSERT_TRUE(a.key_span.has_value());
  EXPECT_EQ(*a.key_span, views.spans[*a.key_index]);
}

TEST(ScorePair, ComposesTheScalesAsAMonolithicOracle) {
  auto cfg = testing::tiny_config();
  Model<double> model(cfg, 6);
  Rng rng(5);
  const auto frames = random_matrix(6, 9, rng);
  const auto words = random_matrix(5, 4, rng);
  const auto views = model.encode_video(frames);
  const auto q = model.encode_query(words).sentence;
  const auto rep = model.score(views, q, 0.3);
  // Oracle from raw views: brute-force max cosine, then literal KCGA on F.
  double sc = -2;
  Eigen::Index key = 0;
  for (Eigen::Index i = 0; i < views.clips.cols(); ++i) {
    const double c = views.clips.col(i).dot(q) / (views.clips.col(i).norm() * q.norm());
    if (c > sc) {
      sc = c;
      key = i;
    }
  }
  const Eigen::RowVectorXd logits = views.clips.col(key).transpose() * views.keys;
  const Eigen::RowVectorXd e = (logits.array() - logits.maxCoeff()).exp();
  const Vec<double> r = views.values * (e / e.sum()).transpose();
  const double sf = r.dot(q) / (r.norm() * q.norm());
  EXPECT_NEAR(rep.clip_score, sc, 1e-12);
  EXPECT_NEAR(rep.frame_score, sf, 1e-12);
  EXPECT_NEAR(rep.fused, 0.3 * sc + 0.7 * sf, 1e-12);
}

TEST(ScorePair, DisabledBranchesPinAlpha) {
  auto cfg = testing::tiny_config();
  cfg.frame_branch = false;
  Model<double> clip_only(cfg, 1);
  Rng rng(6);
  const auto frames = random_matrix(6, 9, rng);
  const Vec<double> q = random_vector(8, rng);
  const auto v1 = clip_only.encode_video(frames);
  EXPECT_EQ(clip_only.score(v1, q, 0.2).fused, clip_only.score(v1, q, 0.2).clip_score);

  cfg = testing::tiny_config();
  cfg.clip_branch = false;
  Model<double> frame_only(cfg, 1);
  EXPECT_EQ(frame_only.config().frame_aggregation, FrameAggregation::simple_attention);
  const auto v2 = frame_only.encode_video(frames);
  const auto rep = frame_only.score(v2, q, 0.9);
  EXPECT_EQ(rep.fused, rep.frame_score);
  EXPECT_FALSE(rep.key_index.has_value());
}

}  // namespace
}  // namespace mssl
