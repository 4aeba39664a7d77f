#pragma once

// Two views of a video: clip scale (downsample to n_u units, encode, then
// average every window of every size) and frame scale (cap to max_frames,
// encode). The two branches share no parameters.

#include <algorithm>
#include <string>
#include <vector>

#include "mssl/nn/sequence_encoder.hpp"

namespace mssl {

/// Column j is the mean of columns [floor(j*n/m), floor((j+1)*n/m)). When
/// n < m that range can be empty; the single column floor(j*n/m) is used.
template <typename T>
Mat<T> downsample_mean(const Mat<T>& x, Eigen::Index m) {
  const Eigen::Index n = x.cols();
  if (n == 0) throw ShapeError("downsample_mean: empty input");
  if (m <= 0) throw ShapeError("downsample_mean: target length must be >= 1");
  Mat<T> out(x.rows(), m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Index begin = j * n / m;
    const Eigen::Index end = std::max((j + 1) * n / m, begin + 1);
    out.col(j) = x.middleCols(begin, end - begin).rowwise().sum() / static_cast<T>(end - begin);
  }
  return out;
}

/// Frames beyond the cap are reduced with the same grouped mean.
template <typename T>
Mat<T> cap_frames(const Mat<T>& v, Eigen::Index max_frames) {
  if (v.cols() == 0) throw ShapeError("video has no frames");
  return v.cols() > max_frames ? downsample_mean(v, max_frames) : v;
}

/// Inclusive unit range covered by a clip.
struct ClipSpan {
  int start = 0;
  int end = 0;
  int length() const { return end - start + 1; }
  friend bool operator==(const ClipSpan&, const ClipSpan&) = default;
};

inline std::size_t clip_count(int units) { return static_cast<std::size_t>(units) * (units + 1) / 2; }

/// Window size ascending, then start ascending.
inline std::vector<ClipSpan> clip_spans(int units) {
  std::vector<ClipSpan> spans;
  spans.reserve(clip_count(units));
  for (int k = 1; k <= units; ++k)
    for (int s = 0; s + k <= units; ++s) spans.push_back({s, s + k - 1});
  return spans;
}

template <typename T>
struct ClipScaleView {
  Mat<T> units;  // U', d x n_u
  Mat<T> clips;  // C, d x n_c
  std::vector<ClipSpan> spans;
};

/// Every sliding window (stride 1, sizes 1..n_u) mean-pooled over U'.
template <typename T>
ClipScaleView<T> build_clips(const Mat<T>& units) {
  const auto n = static_cast<int>(units.cols());
  if (n < 1) throw ShapeError("build_clips: no units");
  ClipScaleView<T> view;
  view.units = units;
  view.spans = clip_spans(n);
  view.clips.resize(units.rows(), static_cast<Eigen::Index>(view.spans.size()));
  Mat<T> running = Mat<T>::Zero(units.rows(), n);  // column s: sum of the current window starting at s
  Eigen::Index idx = 0;
  for (int k = 1; k <= n; ++k) {
    for (int s = 0; s + k <= n; ++s) {
      running.col(s) += units.col(s + k - 1);
      view.clips.col(idx++) = running.col(s) / static_cast<T>(k);
    }
  }
  return view;
}

/// Only the whole-video window; used by the mean-pooling baseline.
template <typename T>
ClipScaleView<T> build_whole_clip(const Mat<T>& units) {
  if (units.cols() < 1) throw ShapeError("build_clips: no units");
  ClipScaleView<T> view;
  view.units = units;
  view.spans = {{0, static_cast<int>(units.cols()) - 1}};
  view.clips = units.rowwise().mean();
  return view;
}

/// Gradient wrt U' given the gradient wrt every clip.
template <typename T>
Mat<T> clips_backward(const Mat<T>& dclips, const std::vector<ClipSpan>& spans, Eigen::Index units) {
  Mat<T> du = Mat<T>::Zero(dclips.rows(), units);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto col = dclips.col(static_cast<Eigen::Index>(i));
    if (col.isZero(0)) continue;
    const Vec<T> share = col / static_cast<T>(spans[i].length());
    for (int t = spans[i].start; t <= spans[i].end; ++t) du.col(t) += share;
  }
  return du;
}

template <typename T>
class ClipBranch {
 public:
  using Cache = typename nn::SequenceEncoder<T>::Cache;

  ClipBranch(int video_dim, int units, const nn::TransformerLayerConfig& cfg) : seq_("clip", video_dim, units, cfg) {}

  int units() const { return seq_.max_positions(); }
  void collect(nn::ParameterList<T>& out) { seq_.collect(out); }

  /// U' = Transformer(FC_ReLU(downsample_mean(V, n_u)) + PE)
  Mat<T> encode(const Mat<T>& frames, Cache& c, Rng* dropout_rng = nullptr) const {
    require_shape(frames.rows() == seq_.input_dim(), "clip branch: video dim " + std::to_string(frames.rows()) +
                                                         ", model expects " + std::to_string(seq_.input_dim()));
    return seq_.forward(downsample_mean(frames, units()), c, dropout_rng);
  }
  Mat<T> encode(const Mat<T>& frames) const {
    Cache c;
    return encode(frames, c);
  }
  void backward(const Cache& c, const Mat<T>& dunits) { seq_.backward(c, dunits); }

 private:
  nn::SequenceEncoder<T> seq_;
};

template <typename T>
class FrameBranch {
 public:
  using Cache = typename nn::SequenceEncoder<T>::Cache;

  FrameBranch(int video_dim, int max_frames, const nn::TransformerLayerConfig& cfg)
      : seq_("frame", video_dim, max_frames, cfg) {}

  int max_frames() const { return seq_.max_positions(); }
  void collect(nn::ParameterList<T>& out) { seq_.collect(out); }

  /// F = Transformer(FC_ReLU(cap(V)) + PE)
  Mat<T> encode(const Mat<T>& frames, Cache& c, Rng* dropout_rng = nullptr) const {
    require_shape(frames.rows() == seq_.input_dim(), "frame branch: video dim " + std::to_string(frames.rows()) +
                                                          ", model expects " + std::to_string(seq_.input_dim()));
    return seq_.forward(cap_frames(frames, max_frames()), c, dropout_rng);
  }
  Mat<T> encode(const Mat<T>& frames) const {
    Cache c;
    return encode(frames, c);
  }
  void backward(const Cache& c, const Mat<T>& dframes) { seq_.backward(c, dframes); }

 private:
  nn::SequenceEncoder<T> seq_;
};

}  // namespace mssl
