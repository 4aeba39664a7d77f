#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mssl/feature_io.hpp"
#include "mssl/manifest.hpp"
#include "mssl/nn/tensor.hpp"

namespace mssl {

struct LoadedVideo {
  std::string id;
  Mat<float> frames;  // d_v x n_v
};

struct LoadedQuery {
  std::string id;
  std::size_t video = 0;  // index into Dataset::videos
  Mat<float> words;       // d_w x n_q
};

/// A manifest with every feature file read into memory.
struct Dataset {
  DatasetManifest manifest;
  std::vector<LoadedVideo> videos;
  std::vector<LoadedQuery> queries;

  int video_dim() const { return videos.empty() ? 0 : static_cast<int>(videos.front().frames.rows()); }
  int query_dim() const { return queries.empty() ? 0 : static_cast<int>(queries.front().words.rows()); }
};

inline Dataset load_dataset(const DatasetManifest& manifest) {
  validate_manifest(manifest);
  Dataset ds;
  ds.manifest = manifest;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& v : manifest.videos) {
    auto m = read_feature_matrix(manifest.resolve(v.feature_path));
    if (m.rows < 1) throw DataError("video '" + v.id + "': feature file has no frames");
    index.emplace(v.id, ds.videos.size());
    ds.videos.push_back({v.id, m.as_columns()});
    if (ds.videos.back().frames.rows() != ds.videos.front().frames.rows())
      throw ShapeError("video '" + v.id + "': feature dim differs from other videos");
  }
  for (const auto& q : manifest.queries) {
    auto m = read_feature_matrix(manifest.resolve(q.feature_path));
    if (m.rows < 1) throw DataError("query '" + q.id + "': feature file has no words");
    ds.queries.push_back({q.id, index.at(q.video_id), m.as_columns()});
    if (ds.queries.back().words.rows() != ds.queries.front().words.rows())
      throw ShapeError("query '" + q.id + "': feature dim differs from other queries");
  }
  return ds;
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  return load_dataset(load_manifest(manifest_path));
}

/// What training is allowed to see: features and query-to-video pairing only.
/// Moment annotations are deliberately absent from this view.
struct TrainingView {
  struct Query {
    const Mat<float>* words;
    std::size_t video;
  };
  std::vector<const Mat<float>*> videos;
  std::vector<Query> queries;
};

inline TrainingView training_view(const Dataset& ds) {
  TrainingView v;
  for (const auto& vid : ds.videos) v.videos.push_back(&vid.frames);
  for (const auto& q : ds.queries) v.queries.push_back({&q.words, q.video});
  return v;
}

}  // namespace mssl
