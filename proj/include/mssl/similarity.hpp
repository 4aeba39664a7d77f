#pragma once

// Coarse-to-fine query/video similarity: max cosine over multi-scale clips
// picks a key clip; the key clip attends over frames (KCGA) and the attended
// frame vector is compared to the query; both scores are fused linearly.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mssl/nn/ops.hpp"
#include "mssl/video_encoder.hpp"

namespace mssl {

enum class FrameAggregation { key_clip_guided, simple_attention };

template <typename T>
struct ClipMatch {
  T score = T(0);
  std::size_t key_index = 0;
};

/// S_c = max_i cos(c_i, q); the smallest maximizing index is the key clip.
template <typename T>
ClipMatch<T> clip_similarity(const Mat<T>& clips, const Vec<T>& query) {
  if (clips.cols() == 0) throw ShapeError("clip_similarity: empty clip set");
  ClipMatch<T> best{nn::cosine<T>(clips.col(0), query), 0};
  for (Eigen::Index i = 1; i < clips.cols(); ++i) {
    const T c = nn::cosine<T>(clips.col(i), query);
    if (c > best.score) best = {c, static_cast<std::size_t>(i)};
  }
  return best;
}

template <typename T>
struct KcgaResult {
  Vec<T> aggregated;  // r
  Vec<T> weights;     // attention over frames
};

/// Key-clip-guided attention on cached projections K = W_k F and Z = W_v F:
///   r = Z softmax(K^T c)   (logits optionally scaled by 1/sqrt(d))
template <typename T>
KcgaResult<T> kcga_projected(const Mat<T>& keys, const Mat<T>& values, const Vec<T>& key_clip, bool scaled = false) {
  if (keys.cols() == 0) throw ShapeError("kcga: no frames");
  require_shape(keys.rows() == key_clip.size() && values.cols() == keys.cols(), "kcga: projections");
  Vec<T> logits = keys.transpose() * key_clip;
  if (scaled) logits /= std::sqrt(static_cast<T>(key_clip.size()));
  KcgaResult<T> out;
  out.weights = nn::softmax<T>(logits);
  out.aggregated = values * out.weights;
  return out;
}

/// Accumulates gradients of r wrt K, Z and the key clip, given dL/dr.
template <typename T>
void kcga_projected_backward(const Mat<T>& keys, const Mat<T>& values, const Vec<T>& key_clip,
                             const KcgaResult<T>& fwd, const Vec<T>& dr, bool scaled, Mat<T>& dkeys, Mat<T>& dvalues,
                             Vec<T>& dkey_clip) {
  const T scale = scaled ? T(1) / std::sqrt(static_cast<T>(key_clip.size())) : T(1);
  dvalues.noalias() += dr * fwd.weights.transpose();
  const Vec<T> dlogits = scale * nn::softmax_backward<T>(fwd.weights, values.transpose() * dr);
  dkeys.noalias() += key_clip * dlogits.transpose();
  dkey_clip.noalias() += keys * dlogits;
}

template <typename T>
struct KcgaParams {
  const Mat<T>& wk;
  const Mat<T>& wv;
};

template <typename T>
KcgaResult<T> kcga(const Mat<T>& frames, const Vec<T>& key_clip, const KcgaParams<T>& p, bool scaled = false) {
  require_shape(p.wk.cols() == frames.rows() && p.wv.cols() == frames.rows(), "kcga: W_k/W_v vs frame dim");
  const Mat<T> keys = p.wk * frames;
  const Mat<T> values = p.wv * frames;
  return kcga_projected<T>(keys, values, key_clip, scaled);
}

/// Accumulates gradients of r wrt F, W_k, W_v and the key clip.
template <typename T>
void kcga_backward(const Mat<T>& frames, const Vec<T>& key_clip, const KcgaParams<T>& p, const KcgaResult<T>& fwd,
                   const Vec<T>& dr, bool scaled, Mat<T>& dframes, Mat<T>& dwk, Mat<T>& dwv, Vec<T>& dkey_clip) {
  const Mat<T> keys = p.wk * frames;
  const Mat<T> values = p.wv * frames;
  Mat<T> dkeys = Mat<T>::Zero(keys.rows(), keys.cols()), dvalues = Mat<T>::Zero(values.rows(), values.cols());
  kcga_projected_backward<T>(keys, values, key_clip, fwd, dr, scaled, dkeys, dvalues, dkey_clip);
  dwk.noalias() += dkeys * frames.transpose();
  dwv.noalias() += dvalues * frames.transpose();
  dframes.noalias() += p.wk.transpose() * dkeys + p.wv.transpose() * dvalues;
}

template <typename T>
T frame_similarity(const Vec<T>& aggregated, const Vec<T>& query) {
  return nn::cosine<T>(aggregated, query);
}

template <typename T>
void validate_alpha(T alpha) {
  if (!(alpha >= T(0) && alpha <= T(1))) throw ConfigError("alpha must lie in [0, 1]");
}

/// alpha * S_c + (1 - alpha) * S_f
template <typename T>
T fused_similarity(T clip_score, T frame_score, T alpha) {
  validate_alpha(alpha);
  return alpha * clip_score + (T(1) - alpha) * frame_score;
}

/// Everything about one video that does not depend on the query.
template <typename T>
struct VideoViews {
  Mat<T> clips;                  // C (empty without a clip branch)
  std::vector<ClipSpan> spans;   // one per clip column
  int units = 0;                 // n_u
  Mat<T> frames;                 // F (empty without a frame branch)
  Mat<T> keys;                   // W_k F, key-clip-guided mode only
  Mat<T> values;                 // W_v F, key-clip-guided mode only
  Vec<T> pooled_frames;          // simple-attention mode only
};

struct ScoringMode {
  bool clip_branch = true;
  bool frame_branch = true;
  FrameAggregation aggregation = FrameAggregation::key_clip_guided;
  bool scaled_kcga = false;

  /// Disabling a branch pins alpha to the surviving one.
  template <typename T>
  T effective_alpha(T alpha) const {
    if (!frame_branch) return T(1);
    if (!clip_branch) return T(0);
    return alpha;
  }
};

template <typename T>
struct SimilarityReport {
  T clip_score = T(0);   // S_c
  T frame_score = T(0);  // S_f
  T fused = T(0);        // S
  std::optional<std::size_t> key_index;
  std::optional<ClipSpan> key_span;
};

template <typename T>
SimilarityReport<T> score_pair(const VideoViews<T>& video, const Vec<T>& query, T alpha, const ScoringMode& mode) {
  validate_alpha(alpha);
  SimilarityReport<T> rep;
  if (mode.clip_branch) {
    const auto match = clip_similarity<T>(video.clips, query);
    rep.clip_score = match.score;
    rep.key_index = match.key_index;
    rep.key_span = video.spans.at(match.key_index);
  }
  if (mode.frame_branch) {
    if (mode.aggregation == FrameAggregation::key_clip_guided && mode.clip_branch) {
      const Vec<T> key_clip = video.clips.col(static_cast<Eigen::Index>(*rep.key_index));
      rep.frame_score =
          frame_similarity<T>(kcga_projected<T>(video.keys, video.values, key_clip, mode.scaled_kcga).aggregated, query);
    } else {
      rep.frame_score = frame_similarity<T>(video.pooled_frames, query);
    }
  }
  rep.fused = fused_similarity<T>(rep.clip_score, rep.frame_score, mode.effective_alpha(alpha));
  return rep;
}

}  // namespace mssl
