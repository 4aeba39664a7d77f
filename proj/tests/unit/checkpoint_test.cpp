#include <gtest/gtest.h>

#include "test_support.hpp"

namespace mssl {
namespace {

using testing::random_matrix;
using testing::TempDir;
using testing::tiny_config;

TEST(Checkpoint, ModelRoundTripIsBitExact) {
  TempDir tmp;
  Model<float> model(tiny_config(), 4);
  save_model(tmp.path(), model, {{"note", "x"}});
  auto loaded = load_model(tmp.path());
  EXPECT_EQ(loaded.info.at("note"), "x");
  EXPECT_EQ(nlohmann::json(loaded.model.config()), nlohmann::json(model.config()));
  const auto a = model.parameters(), b = loaded.model.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
  }
}

TEST(Checkpoint, SavingTwiceGivesIdenticalBytes) {
  TempDir a, b;
  Model<float> model(tiny_config(), 4);
  save_model(a.path(), model);
  save_model(b.path(), model);
  EXPECT_EQ(testing::tree_bytes(a.path()), testing::tree_bytes(b.path()));
}

TEST(Checkpoint, MissingTensorAndWrongShapeAreReported) {
  TempDir tmp;
  nn::Parameter<float> w("w", 2, 3, nn::Init::ones);
  nn::save_tensors(tmp.path(), {{"w", Eigen::MatrixXf::Ones(3, 2)}}, {});
  const auto loaded = nn::load_tensors(tmp.path());
  EXPECT_THROW(nn::restore({&w}, loaded), ShapeError);
  nn::Parameter<float> other("other", 1, 1, nn::Init::ones);
  EXPECT_THROW(nn::restore({&other}, loaded), DataError);
  EXPECT_THROW(nn::load_tensors(tmp / "nowhere"), DataError);
}

TEST(Checkpoint, ConfigMismatchOnRestoreIsAShapeError) {
  TempDir tmp;
  Model<float> model(tiny_config(), 4);
  save_model(tmp.path(), model);
  auto cfg = tiny_config();
  cfg.hidden = 10;
  Model<float> other(cfg);
  EXPECT_THROW(nn::restore(other.parameters(), nn::load_tensors(tmp.path())), ShapeError);
}

class IndexRoundTrip : public ::testing::TestWithParam<int> {};

TEST_P(IndexRoundTrip, ScoresFromSavedIndexEqualDirectScoring) {
  auto cfg = tiny_config();
  if (GetParam() == 1) cfg.frame_aggregation = FrameAggregation::simple_attention;
  if (GetParam() == 2) cfg.frame_branch = false;
  Model<float> model(cfg, 8);
  Rng rng(2);
  std::vector<Mat<float>> frames;
  for (int n : {3, 10, 17}) frames.push_back(random_matrix<float>(cfg.video_dim, n, rng));
  std::vector<const Mat<float>*> ptrs;
  for (auto& f : frames) ptrs.push_back(&f);
  const auto index = build_index(model, {"a", "b", "c"}, ptrs);
  TempDir tmp;
  save_index(tmp.path(), index);
  const auto back = load_index(tmp.path());
  ASSERT_EQ(back.ids, index.ids);
  const auto words = random_matrix<float>(cfg.query_dim, 6, rng);
  const auto q = model.encode_query(words).sentence;
  for (std::size_t v = 0; v < 3; ++v) {
    EXPECT_EQ(back.views[v].spans, index.views[v].spans);
    const auto direct = model.score(model.encode_video(frames[v]), q, 0.3f);
    const auto cached = model.score(back.views[v], q, 0.3f);
    EXPECT_EQ(direct.fused, cached.fused);
    EXPECT_EQ(direct.clip_score, cached.clip_score);
    EXPECT_EQ(direct.frame_score, cached.frame_score);
  }
  const auto r1 = retrieve(model, index, words, 0.3f, 3);
  const auto r2 = retrieve(model, back, words, 0.3f, 3);
  ASSERT_EQ(r1.entries.size(), r2.entries.size());
  for (std::size_t i = 0; i < r1.entries.size(); ++i) {
    EXPECT_EQ(r1.entries[i].video_id, r2.entries[i].video_id);
    EXPECT_EQ(r1.entries[i].score, r2.entries[i].score);
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, IndexRoundTrip, ::testing::Values(0, 1, 2));

TEST(Index, WrongFeatureDimIsRejected) {
  Model<float> model(tiny_config(), 1);
  Rng rng(1);
  const auto bad = random_matrix<float>(9, 4, rng);
  EXPECT_THROW(build_index(model, {"x"}, {&bad}), ShapeError);
}

TEST(Index, LoadingANonIndexCheckpointFails) {
  TempDir tmp;
  Model<float> model(tiny_config(), 1);
  save_model(tmp.path(), model);
  EXPECT_THROW(load_index(tmp.path()), DataError);
}

}  // namespace
}  // namespace mssl
