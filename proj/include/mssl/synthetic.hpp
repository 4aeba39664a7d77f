#pragma once

// Planted-moment dataset generator. Each query has a latent unit topic t;
// its video contains a contiguous moment whose frames are A t + noise, the
// rest of the video is filled with segments of unrelated distractor topics,
// and the query's words are B t + noise.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "mssl/dataset.hpp"
#include "mssl/feature_io.hpp"
#include "mssl/manifest.hpp"
#include "mssl/nn/checkpoint.hpp"
#include "mssl/rng.hpp"

namespace mssl {

struct SyntheticSpec {
  int num_videos = 300;  // training split
  int val_videos = 50;
  int test_videos = 100;
  int queries_per_video = 2;
  int d_v = 32;
  int d_w = 32;
  int frames_min = 40;
  int frames_max = 80;
  double mv_min = 0.1;
  double mv_max = 0.5;
  int topic_dim = 16;
  double noise_sigma = 0.3;
  std::uint64_t seed = 1;
  int words_min = 8;
  int words_max = 16;
  double seconds_per_frame = 1.5;
  int distractor_min = 4;  // frames per distractor segment
  int distractor_max = 12;

  static int min_moment(double mv, int frames) { return std::max(1, static_cast<int>(std::ceil(mv * frames - 1e-9))); }
  static int max_moment(double mv, int frames) { return static_cast<int>(std::floor(mv * frames + 1e-9)); }

  void validate() const {
    if (num_videos < 1 || val_videos < 1 || test_videos < 1 || queries_per_video < 1)
      throw ConfigError("synthetic: all counts must be >= 1");
    if (d_v < 1 || d_w < 1 || topic_dim < 1) throw ConfigError("synthetic: dimensions must be >= 1");
    if (topic_dim > d_v || topic_dim > d_w) throw ConfigError("synthetic: topic_dim must not exceed d_v or d_w");
    if (frames_min < 1 || frames_max < frames_min) throw ConfigError("synthetic: invalid frames range");
    if (words_min < 1 || words_max < words_min) throw ConfigError("synthetic: invalid words range");
    if (distractor_min < 1 || distractor_max < distractor_min)
      throw ConfigError("synthetic: invalid distractor segment range");
    if (!(mv_min > 0.0 && mv_min <= mv_max && mv_max <= 1.0))
      throw ConfigError("synthetic: mv ratio range must satisfy 0 < min <= max <= 1");
    if (!(noise_sigma >= 0.0)) throw ConfigError("synthetic: noise_sigma must be >= 0");
    if (!(seconds_per_frame > 0.0)) throw ConfigError("synthetic: seconds_per_frame must be > 0");
    if (queries_per_video * mv_min > 1.0 + 1e-12)
      throw ConfigError("synthetic: queries_per_video moments of ratio >= mv_min cannot fit one video");
    for (int n = frames_min; n <= frames_max; ++n)
      if (min_moment(mv_min, n) > max_moment(mv_max, n))
        throw ConfigError("synthetic: frames range too small to fit mv ratio range (no integer moment length for " +
                          std::to_string(n) + " frames)");
  }
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
  j = {{"num_videos", s.num_videos},       {"val_videos", s.val_videos},
       {"test_videos", s.test_videos},     {"queries_per_video", s.queries_per_video},
       {"d_v", s.d_v},                     {"d_w", s.d_w},
       {"frames_range", {s.frames_min, s.frames_max}},
       {"mv_ratio_range", {s.mv_min, s.mv_max}},
       {"topic_dim", s.topic_dim},         {"noise_sigma", s.noise_sigma},
       {"seed", s.seed},                   {"words_range", {s.words_min, s.words_max}},
       {"seconds_per_frame", s.seconds_per_frame},
       {"distractor_range", {s.distractor_min, s.distractor_max}}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
  static const char* const known[] = {"num_videos", "val_videos", "test_videos", "queries_per_video", "d_v", "d_w",
                                      "frames_range", "mv_ratio_range", "topic_dim", "noise_sigma", "seed",
                                      "words_range", "seconds_per_frame", "distractor_range"};
  for (const auto& [key, _] : j.items())
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw ConfigError("synthetic spec: unknown key '" + key + "'");
  auto pair = [&](const char* key, auto& lo, auto& hi) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2) throw ConfigError(std::string("synthetic spec: ") + key + " must be [min, max]");
    a.at(0).get_to(lo);
    a.at(1).get_to(hi);
  };
  s.num_videos = j.value("num_videos", s.num_videos);
  s.val_videos = j.value("val_videos", s.val_videos);
  s.test_videos = j.value("test_videos", s.test_videos);
  s.queries_per_video = j.value("queries_per_video", s.queries_per_video);
  s.d_v = j.value("d_v", s.d_v);
  s.d_w = j.value("d_w", s.d_w);
  pair("frames_range", s.frames_min, s.frames_max);
  pair("mv_ratio_range", s.mv_min, s.mv_max);
  s.topic_dim = j.value("topic_dim", s.topic_dim);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.seed = j.value("seed", s.seed);
  pair("words_range", s.words_min, s.words_max);
  s.seconds_per_frame = j.value("seconds_per_frame", s.seconds_per_frame);
  pair("distractor_range", s.distractor_min, s.distractor_max);
}

/// Fixed per-dataset maps from topic space to feature space (orthonormal columns).
struct TopicMaps {
  Eigen::MatrixXd video;  // d_v x topic_dim
  Eigen::MatrixXd words;  // d_w x topic_dim
};

inline Eigen::MatrixXd random_orthonormal(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd g(rows, cols);
  for (Eigen::Index c = 0; c < g.cols(); ++c)
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

inline TopicMaps topic_maps(const SyntheticSpec& s) {
  Rng rng(Rng::mix(s.seed, 1000));
  TopicMaps m;
  m.video = random_orthonormal(s.d_v, s.topic_dim, rng);
  m.words = random_orthonormal(s.d_w, s.topic_dim, rng);
  return m;
}

inline Eigen::VectorXd random_unit(int dim, Rng& rng) {
  Eigen::VectorXd v(dim);
  for (auto& x : v) x = rng.normal();
  const double n = v.norm();
  return n > 0 ? Eigen::VectorXd(v / n) : random_unit(dim, rng);
}

/// One generated split, kept in memory alongside its manifest.
struct SyntheticSplit {
  DatasetManifest manifest;
  std::vector<Eigen::MatrixXf> video_frames;  // d_v x n_v per video
  std::vector<Eigen::MatrixXf> query_words;   // d_w x n_q per query
  std::vector<Eigen::VectorXd> topics;        // latent topic per query
  std::vector<std::pair<int, int>> moment_frames;  // [start, end) frame range per query
};

inline SyntheticSplit generate_split(const SyntheticSpec& spec, Split split) {
  spec.validate();
  const auto maps = topic_maps(spec);
  const int count = split == Split::train ? spec.num_videos : split == Split::val ? spec.val_videos : spec.test_videos;
  Rng rng(Rng::mix(spec.seed, static_cast<std::uint64_t>(split)));
  const std::string tag = to_string(split);
  SyntheticSplit out;
  out.manifest.split = split;
  auto noisy = [&](const Eigen::MatrixXd& map, const Eigen::VectorXd& topic) {
    Eigen::VectorXd x = map * topic;
    for (auto& v : x) v += spec.noise_sigma * rng.normal();
    return x;
  };
  char buf[64];
  for (int v = 0; v < count; ++v) {
    std::snprintf(buf, sizeof buf, "%s_v%05d", tag.c_str(), v);
    const std::string vid = buf;
    const int n = static_cast<int>(rng.between(spec.frames_min, spec.frames_max));
    const int q = spec.queries_per_video;
    const int lo = SyntheticSpec::min_moment(spec.mv_min, n), hi = SyntheticSpec::max_moment(spec.mv_max, n);

    std::vector<int> lengths(static_cast<std::size_t>(q));
    for (int attempt = 0;; ++attempt) {
      int total = 0;
      for (auto& len : lengths) total += (len = static_cast<int>(rng.between(lo, hi)));
      if (total <= n) break;
      if (attempt > 1000) throw ConfigError("synthetic: cannot place disjoint moments in a " + std::to_string(n) + "-frame video");
    }
    int free = n;
    for (int len : lengths) free -= len;
    std::vector<int> cuts(static_cast<std::size_t>(q));
    for (auto& c : cuts) c = static_cast<int>(rng.between(0, free));
    std::sort(cuts.begin(), cuts.end());
    std::vector<int> order(static_cast<std::size_t>(q));
    for (int i = 0; i < q; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order.begin(), order.end());

    std::vector<Eigen::VectorXd> topics(static_cast<std::size_t>(q));
    for (auto& t : topics) t = random_unit(spec.topic_dim, rng);
    std::vector<int> owner(static_cast<std::size_t>(n), -1);
    std::vector<std::pair<int, int>> spans(static_cast<std::size_t>(q));
    int placed = 0;
    for (int k = 0; k < q; ++k) {
      const int qi = order[static_cast<std::size_t>(k)];
      const int start = cuts[static_cast<std::size_t>(k)] + placed;
      const int len = lengths[static_cast<std::size_t>(qi)];
      spans[static_cast<std::size_t>(qi)] = {start, start + len};
      for (int f = start; f < start + len; ++f) owner[static_cast<std::size_t>(f)] = qi;
      placed += len;
    }

    Eigen::MatrixXf frames(spec.d_v, n);
    Eigen::VectorXd distractor;
    int remaining = 0;
    for (int f = 0; f < n; ++f) {
      const int qi = owner[static_cast<std::size_t>(f)];
      if (qi >= 0) {
        remaining = 0;  // a moment interrupts the current distractor segment
        frames.col(f) = noisy(maps.video, topics[static_cast<std::size_t>(qi)]).cast<float>();
        continue;
      }
      if (remaining == 0) {
        distractor = random_unit(spec.topic_dim, rng);
        remaining = static_cast<int>(rng.between(spec.distractor_min, spec.distractor_max));
      }
      --remaining;
      frames.col(f) = noisy(maps.video, distractor).cast<float>();
    }

    const double duration = n * spec.seconds_per_frame;
    out.manifest.videos.push_back({vid, "features/" + tag + "/" + vid + ".msl", duration});
    out.video_frames.push_back(std::move(frames));
    for (int qi = 0; qi < q; ++qi) {
      std::snprintf(buf, sizeof buf, "%s_q%05d_%d", tag.c_str(), v, qi);
      const std::string qid = buf;
      const int words = static_cast<int>(rng.between(spec.words_min, spec.words_max));
      Eigen::MatrixXf w(spec.d_w, words);
      for (int k = 0; k < words; ++k) w.col(k) = noisy(maps.words, topics[static_cast<std::size_t>(qi)]).cast<float>();
      const auto [s0, s1] = spans[static_cast<std::size_t>(qi)];
      out.manifest.queries.push_back({qid, vid, "features/" + tag + "/" + qid + ".msl",
                                      Moment{s0 * spec.seconds_per_frame, s1 * spec.seconds_per_frame}});
      out.query_words.push_back(std::move(w));
      out.topics.push_back(topics[static_cast<std::size_t>(qi)]);
      out.moment_frames.push_back(spans[static_cast<std::size_t>(qi)]);
    }
  }
  return out;
}

/// In-memory dataset with the same content a written split would load to.
inline Dataset to_dataset(const SyntheticSplit& s) {
  Dataset ds;
  ds.manifest = s.manifest;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < s.video_frames.size(); ++i) {
    index.emplace(s.manifest.videos[i].id, i);
    ds.videos.push_back({s.manifest.videos[i].id, s.video_frames[i]});
  }
  for (std::size_t i = 0; i < s.query_words.size(); ++i) {
    const auto& q = s.manifest.queries[i];
    ds.queries.push_back({q.id, index.at(q.video_id), s.query_words[i]});
  }
  return ds;
}

/// Writes `dir/<split>.json` manifests, feature files under `dir/features/`,
/// and the spec itself as `dir/synthetic_spec.json`.
inline void write_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  spec.validate();
  for (Split split : {Split::train, Split::val, Split::test}) {
    auto s = generate_split(spec, split);
    std::filesystem::create_directories(dir / "features" / to_string(split));
    for (std::size_t i = 0; i < s.video_frames.size(); ++i)
      write_feature_matrix(dir / s.manifest.videos[i].feature_path, FeatureMatrix::from_columns(s.video_frames[i]));
    for (std::size_t i = 0; i < s.query_words.size(); ++i)
      write_feature_matrix(dir / s.manifest.queries[i].feature_path, FeatureMatrix::from_columns(s.query_words[i]));
    save_manifest(dir / (to_string(split) + ".json"), s.manifest);
  }
  nn::write_json(dir / "synthetic_spec.json", spec);
}

}  // namespace mssl
