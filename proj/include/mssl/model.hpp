#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mssl/nn/grad_check.hpp"
#include "mssl/nn/parameter.hpp"
#include "mssl/objectives.hpp"
#include "mssl/similarity.hpp"
#include "mssl/text_encoder.hpp"
#include "mssl/video_encoder.hpp"

namespace mssl {

struct ModelConfig {
  int video_dim = 3072;
  int query_dim = 768;
  int hidden = 384;
  int heads = 4;
  int ff_width = 0;  // 0 -> 4 * hidden
  double dropout = 0.0;
  int clip_units = 32;        // n_u
  int max_frames = 128;       // n_v cap
  int max_query_words = 30;   // n_q cap
  bool clip_branch = true;
  bool frame_branch = true;
  FrameAggregation frame_aggregation = FrameAggregation::key_clip_guided;
  bool scaled_kcga = false;
  bool whole_video_clip = false;  // single whole-video window (mean-pooling baseline)

  nn::TransformerLayerConfig layer() const { return {hidden, heads, ff_width, dropout}; }

  /// Without a clip branch there is no key clip, so frames fall back to simple attention.
  ModelConfig resolved() const {
    ModelConfig c = *this;
    if (!c.clip_branch) c.frame_aggregation = FrameAggregation::simple_attention;
    return c;
  }

  ScoringMode scoring() const {
    const auto r = resolved();
    return {r.clip_branch, r.frame_branch, r.frame_aggregation, r.scaled_kcga};
  }

  void validate() const {
    layer().validate();
    if (video_dim <= 0 || query_dim <= 0) throw ConfigError("feature dimensions must be positive");
    if (clip_units < 1 || max_frames < 1 || max_query_words < 1) throw ConfigError("length caps must be >= 1");
    if (!clip_branch && !frame_branch) throw ConfigError("at most one of the clip / frame branches may be disabled");
    if (whole_video_clip && !clip_branch) throw ConfigError("whole-video clip mode needs the clip branch");
  }
};

inline std::string to_string(FrameAggregation a) {
  return a == FrameAggregation::key_clip_guided ? "key_clip_guided" : "simple_attention";
}

inline FrameAggregation frame_aggregation_from_string(const std::string& s) {
  if (s == "key_clip_guided") return FrameAggregation::key_clip_guided;
  if (s == "simple_attention") return FrameAggregation::simple_attention;
  throw ConfigError("unknown frame aggregation '" + s + "'");
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"video_dim", c.video_dim},       {"query_dim", c.query_dim},
       {"hidden", c.hidden},             {"heads", c.heads},
       {"ff_width", c.layer().resolved_ff()},
       {"dropout", c.dropout},           {"clip_units", c.clip_units},
       {"max_frames", c.max_frames},     {"max_query_words", c.max_query_words},
       {"clip_branch", c.clip_branch},   {"frame_branch", c.frame_branch},
       {"frame_aggregation", to_string(c.frame_aggregation)},
       {"scaled_kcga", c.scaled_kcga},   {"whole_video_clip", c.whole_video_clip}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.video_dim = j.value("video_dim", c.video_dim);
  c.query_dim = j.value("query_dim", c.query_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.heads = j.value("heads", c.heads);
  c.ff_width = j.value("ff_width", c.ff_width);
  c.dropout = j.value("dropout", c.dropout);
  c.clip_units = j.value("clip_units", c.clip_units);
  c.max_frames = j.value("max_frames", c.max_frames);
  c.max_query_words = j.value("max_query_words", c.max_query_words);
  c.clip_branch = j.value("clip_branch", c.clip_branch);
  c.frame_branch = j.value("frame_branch", c.frame_branch);
  if (j.contains("frame_aggregation"))
    c.frame_aggregation = frame_aggregation_from_string(j.at("frame_aggregation").get<std::string>());
  c.scaled_kcga = j.value("scaled_kcga", c.scaled_kcga);
  c.whole_video_clip = j.value("whole_video_clip", c.whole_video_clip);
}

/// One training batch: per-pair query features and the pair's video, given as
/// an index into the batch's list of distinct videos.
template <typename T>
struct BatchInput {
  std::vector<const Mat<T>*> queries;
  std::vector<const Mat<T>*> videos;
  std::vector<std::size_t> video_of_pair;

  std::size_t size() const { return queries.size(); }
};

template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& cfg)
      : cfg_((cfg.validate(), cfg.resolved())), text_(cfg_.query_dim, cfg_.max_query_words, cfg_.layer()) {
    if (cfg_.clip_branch) clip_.emplace(cfg_.video_dim, cfg_.clip_units, cfg_.layer());
    if (cfg_.frame_branch) {
      frame_.emplace(cfg_.video_dim, cfg_.max_frames, cfg_.layer());
      if (cfg_.frame_aggregation == FrameAggregation::key_clip_guided) {
        wk_.emplace("kcga.Wk", cfg_.hidden, cfg_.hidden, nn::Init::small_normal);
        wv_.emplace("kcga.Wv", cfg_.hidden, cfg_.hidden, nn::Init::xavier);
      } else {
        pool_w_.emplace("frame.pool.w", cfg_.hidden, 1, nn::Init::small_normal);
      }
    }
  }

  Model(const ModelConfig& cfg, std::uint64_t seed) : Model(cfg) { initialize(seed); }

  const ModelConfig& config() const { return cfg_; }
  ScoringMode scoring() const { return cfg_.scoring(); }

  /// Fixed order: text, clip branch, frame branch, frame aggregation.
  nn::ParameterList<T> parameters() {
    nn::ParameterList<T> out;
    text_.collect(out);
    if (clip_) clip_->collect(out);
    if (frame_) frame_->collect(out);
    for (auto* p : {&wk_, &wv_, &pool_w_})
      if (*p) out.push_back(&**p);
    return out;
  }

  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (auto* p : parameters()) p->initialize(rng);
  }

  void zero_grad() { nn::zero_grads(parameters()); }

  /// Copies parameter values from a model of identical configuration.
  template <typename U>
  void load_values_from(Model<U>& other) {
    nn::copy_values(parameters(), other.parameters());
  }

  SentenceEmbedding<T> encode_query(const Mat<T>& words) const { return text_.encode(words); }

  VideoViews<T> encode_video(const Mat<T>& frames) const {
    VideoCache c;
    return forward_video(frames, c, nullptr);
  }

  SimilarityReport<T> score(const VideoViews<T>& video, const Vec<T>& query, T alpha) const {
    return score_pair<T>(video, query, alpha, scoring());
  }

  /// Per-scale batch similarity matrices (no gradients).
  std::pair<std::optional<BatchSimilarities<T>>, std::optional<BatchSimilarities<T>>> batch_similarities(
      const BatchInput<T>& batch) {
    BatchState st;
    forward_batch(batch, st, nullptr);
    return {st.clip, st.frame};
  }

  /// Loss of one batch; with accumulate_grad set, adds dL/dtheta into every
  /// parameter's grad (callers zero them first).
  LossBreakdown<T> batch_loss(const BatchInput<T>& batch, const LossConfig& loss_cfg, int epoch, Rng& negative_rng,
                              bool accumulate_grad, Rng* dropout_rng = nullptr) {
    BatchState st;
    forward_batch(batch, st, dropout_rng);
    const auto n = static_cast<Eigen::Index>(batch.size());
    Mat<T> dclip = Mat<T>::Zero(n, n), dframe = Mat<T>::Zero(n, n);
    auto losses = total_loss<T>(st.clip ? &*st.clip : nullptr, st.frame ? &*st.frame : nullptr, loss_cfg, epoch,
                                negative_rng, accumulate_grad ? &dclip : nullptr,
                                accumulate_grad ? &dframe : nullptr);
    if (accumulate_grad) backward_batch(batch, st, dclip, dframe);
    return losses;
  }

 private:
  struct VideoCache {
    typename ClipBranch<T>::Cache clip;
    typename FrameBranch<T>::Cache frame;
    nn::AttentionPool<T> pool;
  };

  VideoViews<T> forward_video(const Mat<T>& frames, VideoCache& c, Rng* dropout_rng) const {
    VideoViews<T> v;
    if (clip_) {
      const Mat<T> units = clip_->encode(frames, c.clip, dropout_rng);
      auto view = cfg_.whole_video_clip ? build_whole_clip<T>(units) : build_clips<T>(units);
      v.clips = std::move(view.clips);
      v.spans = std::move(view.spans);
      v.units = static_cast<int>(units.cols());
    }
    if (frame_) {
      v.frames = frame_->encode(frames, c.frame, dropout_rng);
      if (wk_) {
        v.keys = wk_->value * v.frames;
        v.values = wv_->value * v.frames;
      } else {
        c.pool = nn::attention_pool<T>(v.frames, pool_w_->value);
        v.pooled_frames = c.pool.pooled;
      }
    }
    return v;
  }

  struct BatchState {
    std::vector<typename TextEncoder<T>::Cache> query_caches;
    Mat<T> queries;  // d x n pooled sentence vectors
    std::vector<VideoCache> video_caches;
    std::vector<VideoViews<T>> views;
    Mat<T> clip_u, frame_u;  // n x n_videos
    Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> key;
    std::vector<KcgaResult<T>> attended;  // query-major, kcga mode only
    std::optional<BatchSimilarities<T>> clip, frame;
  };

  static Mat<T> normalized_columns(const Mat<T>& m) {
    Mat<T> out = m;
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const T nrm = out.col(c).norm();
      if (nrm > T(0)) out.col(c) /= nrm;
      else out.col(c).setZero();
    }
    return out;
  }

  void forward_batch(const BatchInput<T>& b, BatchState& st, Rng* dropout_rng) {
    const auto n = static_cast<Eigen::Index>(b.size());
    const auto nv = static_cast<Eigen::Index>(b.videos.size());
    require_shape(b.video_of_pair.size() == b.size(), "batch: video_of_pair length");
    for (auto v : b.video_of_pair) require_shape(v < b.videos.size(), "batch: video index out of range");
    st.query_caches.resize(b.size());
    st.queries.resize(cfg_.hidden, n);
    for (Eigen::Index i = 0; i < n; ++i)
      st.queries.col(i) = text_.encode(*b.queries[i], st.query_caches[i], dropout_rng).sentence;
    st.video_caches.resize(b.videos.size());
    st.views.resize(b.videos.size());
    for (Eigen::Index v = 0; v < nv; ++v) st.views[v] = forward_video(*b.videos[v], st.video_caches[v], dropout_rng);

    const Mat<T> qn = normalized_columns(st.queries);
    if (clip_) {
      st.clip_u.resize(n, nv);
      st.key.resize(n, nv);
      for (Eigen::Index v = 0; v < nv; ++v) {
        const Mat<T> cos = normalized_columns(st.views[v].clips).transpose() * qn;  // n_c x n
        for (Eigen::Index i = 0; i < n; ++i) {
          Eigen::Index best = 0;
          for (Eigen::Index c = 1; c < cos.rows(); ++c)
            if (cos(c, i) > cos(best, i)) best = c;
          st.clip_u(i, v) = cos(best, i);
          st.key(i, v) = best;
        }
      }
    }
    if (frame_) {
      st.frame_u.resize(n, nv);
      if (wk_) {
        st.attended.assign(static_cast<std::size_t>(n * nv), {});
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index v = 0; v < nv; ++v) {
            const auto& view = st.views[v];
            const Vec<T> key_clip = view.clips.col(st.key(i, v));
            auto& att = st.attended[static_cast<std::size_t>(i * nv + v)];
            att = kcga_projected<T>(view.keys, view.values, key_clip, cfg_.scaled_kcga);
            st.frame_u(i, v) = nn::cosine<T>(att.aggregated, st.queries.col(i));
          }
        }
      } else {
        for (Eigen::Index v = 0; v < nv; ++v) {
          const Vec<T> r = normalized_columns(st.views[v].pooled_frames);
          st.frame_u.col(v) = qn.transpose() * r;
        }
      }
    }
    auto expand = [&](const Mat<T>& per_video) {
      BatchSimilarities<T> s;
      s.scores.resize(n, n);
      for (Eigen::Index j = 0; j < n; ++j) s.scores.col(j) = per_video.col(static_cast<Eigen::Index>(b.video_of_pair[j]));
      s.positive = positive_mask(b.video_of_pair);
      return s;
    };
    if (clip_) st.clip = expand(st.clip_u);
    if (frame_) st.frame = expand(st.frame_u);
  }

  void backward_batch(const BatchInput<T>& b, BatchState& st, const Mat<T>& dclip, const Mat<T>& dframe) {
    const auto n = static_cast<Eigen::Index>(b.size());
    const auto nv = static_cast<Eigen::Index>(b.videos.size());
    // fold pair columns onto distinct videos
    Mat<T> dclip_u = Mat<T>::Zero(n, nv), dframe_u = Mat<T>::Zero(n, nv);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto v = static_cast<Eigen::Index>(b.video_of_pair[j]);
      dclip_u.col(v) += dclip.col(j);
      dframe_u.col(v) += dframe.col(j);
    }
    Mat<T> dqueries = Mat<T>::Zero(cfg_.hidden, n);
    for (Eigen::Index v = 0; v < nv; ++v) {
      const auto& view = st.views[v];
      Mat<T> dclips, dkeys, dvalues;
      Vec<T> dpooled;
      if (clip_) dclips = Mat<T>::Zero(view.clips.rows(), view.clips.cols());
      if (wk_) {
        dkeys = Mat<T>::Zero(view.keys.rows(), view.keys.cols());
        dvalues = Mat<T>::Zero(view.values.rows(), view.values.cols());
      } else if (frame_) {
        dpooled = Vec<T>::Zero(cfg_.hidden);
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vec<T> q = st.queries.col(i);
        Vec<T> dq = Vec<T>::Zero(cfg_.hidden);
        if (clip_ && dclip_u(i, v) != T(0)) {
          const Eigen::Index k = st.key(i, v);
          Vec<T> dc = Vec<T>::Zero(cfg_.hidden);
          nn::cosine_backward<T>(view.clips.col(k), q, dclip_u(i, v), &dc, &dq);
          dclips.col(k) += dc;
        }
        if (frame_ && dframe_u(i, v) != T(0)) {
          if (wk_) {
            const Eigen::Index k = st.key(i, v);
            const auto& att = st.attended[static_cast<std::size_t>(i * nv + v)];
            Vec<T> dr = Vec<T>::Zero(cfg_.hidden), dkey = Vec<T>::Zero(cfg_.hidden);
            nn::cosine_backward<T>(att.aggregated, q, dframe_u(i, v), &dr, &dq);
            kcga_projected_backward<T>(view.keys, view.values, view.clips.col(k), att, dr, cfg_.scaled_kcga, dkeys,
                                       dvalues, dkey);
            dclips.col(k) += dkey;
          } else {
            nn::cosine_backward<T>(view.pooled_frames, q, dframe_u(i, v), &dpooled, &dq);
          }
        }
        dqueries.col(i) += dq;
      }
      auto& cache = st.video_caches[v];
      if (clip_) {
        Mat<T> dunits;
        if (cfg_.whole_video_clip) {
          dunits = dclips.col(0).replicate(1, view.units) / static_cast<T>(view.units);
        } else {
          dunits = clips_backward<T>(dclips, view.spans, view.units);
        }
        clip_->backward(cache.clip, dunits);
      }
      if (frame_) {
        Mat<T> dframes;
        if (wk_) {
          wk_->grad.noalias() += dkeys * view.frames.transpose();
          wv_->grad.noalias() += dvalues * view.frames.transpose();
          dframes = wk_->value.transpose() * dkeys;
          dframes.noalias() += wv_->value.transpose() * dvalues;
        } else {
          dframes = nn::attention_pool_backward<T>(view.frames, pool_w_->value, cache.pool, dpooled, pool_w_->grad);
        }
        frame_->backward(cache.frame, dframes);
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) text_.backward(st.query_caches[i], dqueries.col(i));
  }

  ModelConfig cfg_;
  TextEncoder<T> text_;
  std::optional<ClipBranch<T>> clip_;
  std::optional<FrameBranch<T>> frame_;
  std::optional<nn::Parameter<T>> wk_, wv_, pool_w_;
};

}  // namespace mssl
