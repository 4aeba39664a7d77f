#pragma once

// Retrieval over a precomputed video index and R@K / SumR reporting.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mssl/dataset.hpp"
#include "mssl/model.hpp"
#include "mssl/mv_ratio.hpp"
#include "mssl/nn/checkpoint.hpp"

namespace mssl {

inline const std::vector<int>& standard_recall_ks() {
  static const std::vector<int> ks{1, 5, 10, 100};
  return ks;
}

// ---------------------------------------------------------------------------
// Index

/// Query-independent per-video quantities, immutable once built.
struct VideoIndex {
  ModelConfig config;
  std::vector<std::string> ids;
  std::vector<VideoViews<float>> views;

  std::size_t size() const { return ids.size(); }
};

inline VideoIndex build_index(const Model<float>& model, const std::vector<std::string>& ids,
                              const std::vector<const Mat<float>*>& frames) {
  require_shape(ids.size() == frames.size(), "build_index: ids vs features");
  VideoIndex idx;
  idx.config = model.config();
  idx.ids = ids;
  idx.views.reserve(ids.size());
  for (const auto* f : frames) {
    require_shape(f->rows() == model.config().video_dim, "build_index: video feature dim " +
                                                             std::to_string(f->rows()) + ", checkpoint expects " +
                                                             std::to_string(model.config().video_dim));
    idx.views.push_back(model.encode_video(*f));
  }
  return idx;
}

inline VideoIndex build_index(const Model<float>& model, const Dataset& ds) {
  std::vector<std::string> ids;
  std::vector<const Mat<float>*> frames;
  for (const auto& v : ds.videos) {
    ids.push_back(v.id);
    frames.push_back(&v.frames);
  }
  return build_index(model, ids, frames);
}

inline void save_index(const std::filesystem::path& dir, const VideoIndex& idx) {
  std::vector<nn::NamedTensor> tensors;
  nlohmann::json videos = nlohmann::json::array();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& v = idx.views[i];
    const std::string p = "v" + std::to_string(i) + ".";
    nlohmann::json e = {{"id", idx.ids[i]}, {"units", v.units}};
    auto add = [&](const char* field, const Mat<float>& m) {
      if (m.size() == 0) return;
      tensors.push_back({p + field, m});
    };
    add("clips", v.clips);
    add("frames", v.frames);
    add("keys", v.keys);
    add("values", v.values);
    add("pooled_frames", v.pooled_frames);
    e["clips"] = v.clips.cols();
    videos.push_back(std::move(e));
  }
  nn::save_tensors(dir, tensors, {{"kind", "video-index"}, {"model", idx.config}, {"videos", videos}});
}

inline VideoIndex load_index(const std::filesystem::path& dir) {
  const auto t = nn::load_tensors(dir);
  if (t.meta.value("kind", "") != "video-index") throw DataError(dir.string() + ": not a video index");
  VideoIndex idx;
  idx.config = t.meta.at("model").get<ModelConfig>();
  std::size_t i = 0;
  for (const auto& e : t.meta.at("videos")) {
    const std::string p = "v" + std::to_string(i++) + ".";
    VideoViews<float> v;
    v.units = e.at("units").get<int>();
    auto get = [&](const char* field) -> Mat<float> {
      const auto* x = t.find(p + field);
      return x ? x->value : Mat<float>();
    };
    v.clips = get("clips");
    v.frames = get("frames");
    v.keys = get("keys");
    v.values = get("values");
    const Mat<float> pooled = get("pooled_frames");
    if (pooled.size()) v.pooled_frames = pooled.col(0);
    if (v.clips.cols() > 0) {
      v.spans = v.clips.cols() == 1 && idx.config.whole_video_clip ? std::vector<ClipSpan>{{0, v.units - 1}}
                                                                    : clip_spans(v.units);
      require_shape(v.spans.size() == static_cast<std::size_t>(v.clips.cols()), "index: clip count vs units");
    }
    idx.ids.push_back(e.at("id").get<std::string>());
    idx.views.push_back(std::move(v));
  }
  return idx;
}

// ---------------------------------------------------------------------------
// Ranking

struct RankedEntry {
  std::string video_id;
  double score = 0.0;
};

struct RankedList {
  std::string query_id;
  std::vector<RankedEntry> entries;  // top-K, best first
  std::size_t truth_rank = 0;        // 1-based rank of the ground-truth video; 0 when unknown
};

/// Descending score, ties by ascending video id.
inline bool ranks_before(double sa, const std::string& ia, double sb, const std::string& ib) {
  return sa > sb || (sa == sb && ia < ib);
}

/// Full ordering of a gallery, truncated to k.
inline RankedList rank_gallery(const std::string& query_id, const std::vector<std::string>& ids,
                               const std::vector<double>& scores, std::size_t k,
                               const std::optional<std::string>& truth = std::nullopt) {
  require_shape(ids.size() == scores.size(), "rank_gallery: ids vs scores");
  if (ids.empty()) throw DataError("retrieval over an empty gallery");
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t keep = std::min(k, ids.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) { return ranks_before(scores[a], ids[a], scores[b], ids[b]); });
  RankedList out;
  out.query_id = query_id;
  for (std::size_t i = 0; i < keep; ++i) out.entries.push_back({ids[order[i]], scores[order[i]]});
  if (truth) {
    std::optional<std::size_t> t;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == *truth) t = i;
    if (!t) throw DataError("query '" + query_id + "': ground-truth video '" + *truth + "' not in gallery");
    std::size_t rank = 1;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (i != *t && ranks_before(scores[i], ids[i], scores[*t], ids[*t])) ++rank;
    out.truth_rank = rank;
  }
  return out;
}

/// Top-K videos for one query's word features.
inline RankedList retrieve(const Model<float>& model, const VideoIndex& index, const Mat<float>& words, float alpha,
                           std::size_t k, const std::string& query_id = "",
                           const std::optional<std::string>& truth = std::nullopt) {
  if (k < 1) throw ConfigError("retrieve: K must be >= 1");
  if (index.size() == 0) throw DataError("retrieval over an empty index");
  const auto q = model.encode_query(words).sentence;
  std::vector<double> scores(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) scores[i] = model.score(index.views[i], q, alpha).fused;
  return rank_gallery(query_id, index.ids, scores, k, truth);
}

// ---------------------------------------------------------------------------
// Metrics

inline double recall_at_k(const std::vector<RankedList>& lists, int k) {
  if (lists.empty()) throw DataError("recall over an empty query set");
  std::size_t hits = 0;
  for (const auto& l : lists) {
    if (l.truth_rank == 0) throw DataError("query '" + l.query_id + "' carries no ground-truth rank");
    if (l.truth_rank <= static_cast<std::size_t>(k)) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(lists.size());
}

struct EvalReport {
  double r1 = 0, r5 = 0, r10 = 0, r100 = 0;
  std::size_t queries = 0;

  double sum_recall() const { return r1 + r5 + r10 + r100; }
  std::vector<double> recalls() const { return {r1, r5, r10, r100}; }
};

inline double sum_recall(const EvalReport& r) { return r.sum_recall(); }

inline EvalReport make_report(const std::vector<RankedList>& lists) {
  return {recall_at_k(lists, 1), recall_at_k(lists, 5), recall_at_k(lists, 10), recall_at_k(lists, 100),
          lists.size()};
}

inline double round1(double x) { return std::round(x * 10.0) / 10.0; }

inline nlohmann::json report_to_json(const EvalReport& r) {
  return {{"R@1", round1(r.r1)},
          {"R@5", round1(r.r5)},
          {"R@10", round1(r.r10)},
          {"R@100", round1(r.r100)},
          {"SumR", round1(r.sum_recall())},
          {"queries", r.queries},
          {"full_precision",
           {{"R@1", r.r1}, {"R@5", r.r5}, {"R@10", r.r10}, {"R@100", r.r100}, {"SumR", r.sum_recall()}}}};
}

struct GroupedReport {
  EvalReport pooled;
  std::vector<double> edges;
  std::vector<std::optional<EvalReport>> bins;  // empty bins have no report
};

inline GroupedReport grouped_eval(const std::vector<RankedList>& lists, const MvGroup& group) {
  std::unordered_map<std::string, const RankedList*> by_id;
  for (const auto& l : lists) by_id.emplace(l.query_id, &l);
  GroupedReport out;
  out.pooled = make_report(lists);
  out.edges = group.edges;
  std::size_t covered = 0;
  for (const auto& bin : group.bins) {
    std::vector<RankedList> members;
    for (const auto& id : bin) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("M/V bin lists query '" + id + "' that was not evaluated");
      members.push_back(*it->second);
    }
    covered += members.size();
    out.bins.push_back(members.empty() ? std::nullopt : std::optional<EvalReport>(make_report(members)));
  }
  if (covered != lists.size()) throw DataError("M/V bins do not partition the evaluated queries");
  return out;
}

inline nlohmann::json grouped_to_json(const GroupedReport& g) {
  nlohmann::json bins = nlohmann::json::array();
  for (std::size_t b = 0; b < g.bins.size(); ++b) {
    nlohmann::json e = {{"lower", g.edges[b]}, {"upper", g.edges[b + 1]}};
    e["report"] = g.bins[b] ? report_to_json(*g.bins[b]) : nlohmann::json(nullptr);
    bins.push_back(std::move(e));
  }
  return {{"pooled", report_to_json(g.pooled)}, {"bins", bins}};
}

// ---------------------------------------------------------------------------
// Whole-split evaluation

/// S_c and S_f of every (query, video) pair; lets alpha vary without re-encoding.
struct ScoreTable {
  std::vector<std::string> query_ids;
  std::vector<std::string> video_ids;
  std::vector<std::string> truth;          // ground-truth video id per query
  std::vector<std::vector<float>> clip;   // [query][video]
  std::vector<std::vector<float>> frame;
  ScoringMode mode;
};

inline ScoreTable score_table(const Model<float>& model, const VideoIndex& index, const Dataset& ds) {
  ScoreTable t;
  t.video_ids = index.ids;
  t.mode = model.scoring();
  for (const auto& q : ds.queries) {
    const auto emb = model.encode_query(q.words).sentence;
    std::vector<float> c(index.size()), f(index.size());
    for (std::size_t v = 0; v < index.size(); ++v) {
      const auto rep = model.score(index.views[v], emb, 1.0f);
      c[v] = rep.clip_score;
      f[v] = rep.frame_score;
    }
    t.query_ids.push_back(q.id);
    t.truth.push_back(ds.videos[q.video].id);
    t.clip.push_back(std::move(c));
    t.frame.push_back(std::move(f));
  }
  return t;
}

enum class ScoreSource { fused, clip_only, frame_only };

inline std::vector<RankedList> rank_table(const ScoreTable& t, float alpha, std::size_t k = 100,
                                          ScoreSource source = ScoreSource::fused) {
  validate_alpha(alpha);
  const float a = t.mode.effective_alpha(alpha);
  std::vector<RankedList> out;
  std::vector<double> scores(t.video_ids.size());
  for (std::size_t q = 0; q < t.query_ids.size(); ++q) {
    for (std::size_t v = 0; v < scores.size(); ++v) {
      switch (source) {
        case ScoreSource::fused: scores[v] = fused_similarity<float>(t.clip[q][v], t.frame[q][v], a); break;
        case ScoreSource::clip_only: scores[v] = t.clip[q][v]; break;
        case ScoreSource::frame_only: scores[v] = t.frame[q][v]; break;
      }
    }
    out.push_back(rank_gallery(t.query_ids[q], t.video_ids, scores, k, t.truth[q]));
  }
  return out;
}

struct EvalOutcome {
  EvalReport report;
  std::vector<RankedList> lists;
};

inline EvalOutcome evaluate(const Model<float>& model, const Dataset& ds, float alpha, std::size_t k = 100) {
  if (ds.queries.empty()) throw DataError("evaluation split has no queries");
  const auto index = build_index(model, ds);
  auto lists = rank_table(score_table(model, index, ds), alpha, k);
  return {make_report(lists), std::move(lists)};
}

}  // namespace mssl
