#include <gtest/gtest.h>

#include "test_support.hpp"

namespace mssl {
namespace {

using testing::TempDir;

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.num_videos = 12;
  s.val_videos = 4;
  s.test_videos = 5;
  s.d_v = 10;
  s.d_w = 8;
  s.topic_dim = 6;
  s.frames_min = 20;
  s.frames_max = 30;
  s.seed = 11;
  return s;
}

TEST(Synthetic, SameSeedGivesByteIdenticalTree) {
  TempDir a, b;
  write_synthetic(small_spec(), a.path());
  write_synthetic(small_spec(), b.path());
  const auto ta = testing::tree_bytes(a.path());
  EXPECT_EQ(ta, testing::tree_bytes(b.path()));
  EXPECT_TRUE(ta.count("train.json") && ta.count("val.json") && ta.count("test.json"));
  auto other = small_spec();
  other.seed = 12;
  TempDir c;
  write_synthetic(other, c.path());
  EXPECT_NE(ta, testing::tree_bytes(c.path()));
}

TEST(Synthetic, WrittenSplitsLoadBack) {
  TempDir dir;
  const auto spec = small_spec();
  write_synthetic(spec, dir.path());
  const auto ds = load_dataset(dir / "test.json");
  EXPECT_EQ(ds.videos.size(), 5u);
  EXPECT_EQ(ds.queries.size(), 10u);
  EXPECT_EQ(ds.video_dim(), 10);
  EXPECT_EQ(ds.query_dim(), 8);
  const auto mem = to_dataset(generate_split(spec, Split::test));
  for (std::size_t i = 0; i < ds.videos.size(); ++i) EXPECT_EQ(ds.videos[i].frames, mem.videos[i].frames);
  for (std::size_t i = 0; i < ds.queries.size(); ++i) EXPECT_EQ(ds.queries[i].words, mem.queries[i].words);
}

TEST(Synthetic, DefaultScaleHasBoundedMoments) {
  SyntheticSpec spec;  // 300 training videos, frames 40-80, M/V 0.1-0.5
  const auto s = generate_split(spec, Split::train);
  ASSERT_EQ(s.manifest.videos.size(), 300u);
  validate_manifest(s.manifest, false);
  for (std::size_t v = 0; v < s.video_frames.size(); ++v) {
    const auto n = s.video_frames[v].cols();
    EXPECT_GE(n, 40);
    EXPECT_LE(n, 80);
  }
  for (const auto& q : s.manifest.queries) {
    const double r = moment_to_video_ratio(q.moment, s.manifest.find_video(q.video_id)->duration);
    EXPECT_GE(r, 0.1 - 1e-9);
    EXPECT_LE(r, 0.5 + 1e-9);
  }
}

TEST(Synthetic, MomentsOfOneVideoAreDisjoint) {
  SyntheticSpec spec = small_spec();
  spec.queries_per_video = 3;
  spec.mv_max = 0.3;
  const auto s = generate_split(spec, Split::train);
  for (std::size_t v = 0; v < s.manifest.videos.size(); ++v) {
    std::vector<int> cover(static_cast<std::size_t>(s.video_frames[v].cols()), 0);
    for (int k = 0; k < 3; ++k) {
      const auto [a, b] = s.moment_frames[v * 3 + static_cast<std::size_t>(k)];
      for (int f = a; f < b; ++f) ++cover[static_cast<std::size_t>(f)];
    }
    for (int c : cover) EXPECT_LE(c, 1);
  }
}

TEST(Synthetic, NoiselessMomentsBeatEveryDistractorFrame) {
  SyntheticSpec spec = small_spec();
  spec.noise_sigma = 0.0;
  spec.num_videos = 40;
  const auto s = generate_split(spec, Split::train);
  const auto maps = topic_maps(spec);
  for (std::size_t qi = 0; qi < s.query_words.size(); ++qi) {
    const auto& q = s.manifest.queries[qi];
    std::size_t v = 0;
    while (s.manifest.videos[v].id != q.video_id) ++v;
    const Eigen::MatrixXd frames = s.video_frames[v].cast<double>();
    // Bring both modalities into topic space through their (orthonormal) maps.
    const Eigen::VectorXd query_topic = maps.words.transpose() * s.query_words[qi].cast<double>().rowwise().mean();
    const Eigen::MatrixXd frame_topics = maps.video.transpose() * frames;
    const auto [a, b] = s.moment_frames[qi];
    const double planted = (frame_topics.middleCols(a, b - a).rowwise().mean()).dot(query_topic);
    for (Eigen::Index f = 0; f < frames.cols(); ++f) {
      if (f >= a && f < b) continue;
      EXPECT_GT(planted, frame_topics.col(f).dot(query_topic) + 1e-9) << q.id << " frame " << f;
    }
  }
}

TEST(Synthetic, InvalidSpecsAreRejected) {
  auto s = small_spec();
  s.mv_min = 0.6;
  s.mv_max = 0.5;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.frames_min = s.frames_max = 3;
  s.mv_min = s.mv_max = 0.5;  // no integer moment length in 3 frames
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.topic_dim = 50;
  EXPECT_THROW(s.validate(), ConfigError);
  s = small_spec();
  s.noise_sigma = -1;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Synthetic, SpecJsonRoundTrip) {
  auto s = small_spec();
  s.noise_sigma = 0.25;
  const nlohmann::json j = s;
  const auto back = j.get<SyntheticSpec>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(j.at("frames_range"), nlohmann::json({20, 30}));
}

}  // namespace
}  // namespace mssl
