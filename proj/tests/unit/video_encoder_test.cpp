#include <gtest/gtest.h>

#include "test_support.hpp"

namespace mssl {
namespace {

using testing::random_matrix;

TEST(ClipCount, TriangularNumbers) {
  for (int n : {1, 2, 3, 8, 32}) {
    EXPECT_EQ(clip_count(n), static_cast<std::size_t>(n * (n + 1) / 2));
    EXPECT_EQ(clip_spans(n).size(), clip_count(n));
  }
  EXPECT_EQ(clip_count(32), 528u);
}

TEST(ClipSpans, OrderedBySizeThenStart) {
  const auto s = clip_spans(3);
  const std::vector<ClipSpan> expected{{0, 0}, {1, 1}, {2, 2}, {0, 1}, {1, 2}, {0, 2}};
  EXPECT_EQ(s, expected);
}

TEST(DownsampleMean, IdentityAndPooling) {
  Rng rng(1);
  const auto x = random_matrix(3, 6, rng);
  EXPECT_EQ(downsample_mean(x, 6), x);
  const auto y = downsample_mean(x, 2);
  EXPECT_LT((y.col(0) - x.leftCols(3).rowwise().mean()).norm(), 1e-12);
  EXPECT_LT((y.col(1) - x.rightCols(3).rowwise().mean()).norm(), 1e-12);
}

TEST(DownsampleMean, ShortInputRepeatsColumns) {
  Rng rng(2);
  const auto x = random_matrix(2, 3, rng);
  const auto y = downsample_mean(x, 8);
  ASSERT_EQ(y.cols(), 8);
  for (Eigen::Index j = 0; j < 8; ++j) EXPECT_EQ(y.col(j), x.col(j * 3 / 8));
}

TEST(DownsampleMean, UnevenGroupsFollowFloorBoundaries) {
  Mat<double> x(1, 5);
  x << 1, 2, 3, 4, 5;
  const auto y = downsample_mean(x, 2);  // groups [0,2) and [2,5)
  EXPECT_DOUBLE_EQ(y(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(y(0, 1), 4.0);
}

TEST(BuildClips, EachClipIsTheMeanOfItsUnits) {
  Rng rng(3);
  const auto u = random_matrix(4, 8, rng);
  const auto view = build_clips<double>(u);
  ASSERT_EQ(view.clips.cols(), 36);
  for (std::size_t i = 0; i < view.spans.size(); ++i) {
    const auto& s = view.spans[i];
    const Vec<double> oracle = u.middleCols(s.start, s.length()).rowwise().mean();
    EXPECT_LT((view.clips.col(static_cast<Eigen::Index>(i)) - oracle).cwiseAbs().maxCoeff(), 1e-6);
  }
  EXPECT_EQ(view.clips.col(0), u.col(0));
  EXPECT_LT((view.clips.col(35) - u.rowwise().mean()).norm(), 1e-12);
}

TEST(BuildClips, BackwardMatchesFiniteDifferences) {
  Rng rng(4);
  Mat<double> u = random_matrix(3, 5, rng);
  const Mat<double> r = random_matrix(3, 15, rng);
  auto loss = [&] { return build_clips<double>(u).clips.cwiseProduct(r).sum(); };
  const auto view = build_clips<double>(u);
  const Mat<double> du = clips_backward<double>(r, view.spans, 5);
  EXPECT_LT(nn::grad_check(loss, u, du).max_rel_error, 1e-6);
}

TEST(ClipBranch, FixedUnitCountRegardlessOfLength) {
  ClipBranch<float> branch(12, 32, {16, 2, 0, 0.0});
  nn::ParameterList<float> ps;
  branch.collect(ps);
  Rng rng(5);
  for (auto* p : ps) p->initialize(rng);
  for (int frames : {1, 17, 32, 200}) {
    const auto units = branch.encode(random_matrix<float>(12, frames, rng));
    EXPECT_EQ(units.cols(), 32);
    EXPECT_EQ(build_clips<float>(units).clips.cols(), 528);
  }
}

TEST(FrameBranch, CapsLongVideos) {
  FrameBranch<float> branch(12, 128, {16, 2, 0, 0.0});
  nn::ParameterList<float> ps;
  branch.collect(ps);
  Rng rng(6);
  for (auto* p : ps) p->initialize(rng);
  EXPECT_EQ(branch.encode(random_matrix<float>(12, 300, rng)).cols(), 128);
  EXPECT_EQ(branch.encode(random_matrix<float>(12, 40, rng)).cols(), 40);
  EXPECT_THROW(branch.encode(Mat<float>::Zero(11, 5)), ShapeError);
  EXPECT_THROW(branch.encode(Mat<float>::Zero(12, 0)), ShapeError);
}

TEST(FrameBranch, PaperScaleShapes) {
  FrameBranch<float> branch(3072, 128, nn::TransformerLayerConfig{});
  nn::ParameterList<float> ps;
  branch.collect(ps);
  Rng rng(7);
  for (auto* p : ps) p->initialize(rng);
  const auto f = branch.encode(random_matrix<float>(3072, 128, rng));
  EXPECT_EQ(f.rows(), 384);
  EXPECT_EQ(f.cols(), 128);
}

}  // namespace
}  // namespace mssl
