#pragma once

// Batch ranking losses over an n x n similarity matrix S with S(i, j) =
// similarity(query_i, video_j). Entries whose query and video describe the
// same video are positives and never serve as negatives.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mssl/nn/tensor.hpp"
#include "mssl/rng.hpp"

namespace mssl {

enum class NegativeMode { random, hardest };

inline std::string to_string(NegativeMode m) { return m == NegativeMode::random ? "random" : "hardest"; }

/// g(s) inside the InfoNCE ratio.
enum class Positivity { exponential, identity };

struct LossConfig {
  double margin = 0.2;
  double lambda_clip = 0.02;   // weight of the clip-scale InfoNCE term
  double lambda_frame = 0.04;  // weight of the frame-scale InfoNCE term
  int hard_negative_epoch = 20;
  double temperature = 1.0;
  Positivity positivity = Positivity::exponential;
  bool use_triplet = true;
  bool use_nce = true;

  NegativeMode mode_for_epoch(int epoch) const {
    return epoch >= hard_negative_epoch ? NegativeMode::hardest : NegativeMode::random;
  }

  void validate() const {
    if (!(margin >= 0.0)) throw ConfigError("margin must be >= 0");
    if (!(lambda_clip >= 0.0) || !(lambda_frame >= 0.0)) throw ConfigError("lambda weights must be >= 0");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (!use_triplet && !use_nce) throw ConfigError("at least one of triplet / InfoNCE must be enabled");
  }
};

using PositiveMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// positive(i, j) iff pair i and pair j refer to the same video.
inline PositiveMask positive_mask(const std::vector<std::size_t>& video_of_pair) {
  const auto n = static_cast<Eigen::Index>(video_of_pair.size());
  PositiveMask m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      m(i, j) = video_of_pair[static_cast<std::size_t>(i)] == video_of_pair[static_cast<std::size_t>(j)];
  return m;
}

template <typename T>
struct BatchSimilarities {
  Mat<T> scores;
  PositiveMask positive;

  Eigen::Index size() const { return scores.rows(); }

  void validate() const {
    require_shape(scores.rows() == scores.cols(), "similarity matrix must be square");
    require_shape(positive.rows() == scores.rows() && positive.cols() == scores.cols(), "positive mask shape");
    if (scores.rows() < 2) throw DataError("batch needs at least two pairs");
    for (Eigen::Index i = 0; i < scores.rows(); ++i)
      if (!positive(i, i)) throw DataError("positive mask must contain the diagonal");
    if (!scores.allFinite()) throw NumericError("non-finite similarity in batch");
  }
};

/// Mean over anchors of the two hinge terms (negative query for the video,
/// negative video for the query). grad, when given, receives dL/dS (added).
template <typename T>
T triplet_loss(const BatchSimilarities<T>& s, T margin, NegativeMode mode, Rng& rng, Mat<T>* grad = nullptr) {
  s.validate();
  const Eigen::Index n = s.size();
  const T inv_n = T(1) / static_cast<T>(n);
  T loss = T(0);
  std::vector<Eigen::Index> candidates;
  auto pick = [&](Eigen::Index anchor, bool over_queries) {
    candidates.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool pos = over_queries ? s.positive(j, anchor) : s.positive(anchor, j);
      if (!pos) candidates.push_back(j);
    }
    if (candidates.empty())
      throw DataError("no eligible negative for anchor " + std::to_string(anchor) +
                      (over_queries ? " (query side)" : " (video side)"));
    if (mode == NegativeMode::random) return candidates[rng.below(candidates.size())];
    Eigen::Index best = candidates.front();
    for (auto j : candidates) {
      const T v = over_queries ? s.scores(j, anchor) : s.scores(anchor, j);
      const T b = over_queries ? s.scores(best, anchor) : s.scores(anchor, best);
      if (v > b) best = j;
    }
    return best;
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const T pos = s.scores(i, i);
    const Eigen::Index neg_q = pick(i, true);
    const Eigen::Index neg_v = pick(i, false);
    const T hinge_q = margin + s.scores(neg_q, i) - pos;
    const T hinge_v = margin + s.scores(i, neg_v) - pos;
    if (hinge_q > T(0)) {
      loss += hinge_q;
      if (grad) {
        (*grad)(neg_q, i) += inv_n;
        (*grad)(i, i) -= inv_n;
      }
    }
    if (hinge_v > T(0)) {
      loss += hinge_v;
      if (grad) {
        (*grad)(i, neg_v) += inv_n;
        (*grad)(i, i) -= inv_n;
      }
    }
  }
  return loss * inv_n;
}

/// InfoNCE in both directions with g(s) = exp(s / tau) (or identity).
template <typename T>
T info_nce(const BatchSimilarities<T>& s, const LossConfig& cfg, Mat<T>* grad = nullptr) {
  s.validate();
  const Eigen::Index n = s.size();
  const T inv_n = T(1) / static_cast<T>(n);
  const T tau = static_cast<T>(cfg.temperature);
  T loss = T(0);
  // entries: (row, col) of the positive first, then every negative
  std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
  auto direction = [&](Eigen::Index i, bool over_queries) {
    cells.assign(1, {i, i});
    for (Eigen::Index j = 0; j < n; ++j) {
      if (over_queries ? s.positive(j, i) : s.positive(i, j)) continue;
      cells.push_back(over_queries ? std::pair{j, i} : std::pair{i, j});
    }
    if (cfg.positivity == Positivity::exponential) {
      T mx = -std::numeric_limits<T>::infinity();
      for (auto [r, c] : cells) mx = std::max(mx, s.scores(r, c) / tau);
      T z = T(0);
      for (auto [r, c] : cells) z += std::exp(s.scores(r, c) / tau - mx);
      const T log_ratio = s.scores(i, i) / tau - mx - std::log(z);
      loss -= log_ratio;
      if (grad) {
        for (auto [r, c] : cells) (*grad)(r, c) += inv_n * std::exp(s.scores(r, c) / tau - mx) / z / tau;
        (*grad)(i, i) -= inv_n / tau;
      }
    } else {
      T denom = T(0);
      for (auto [r, c] : cells) {
        if (!(s.scores(r, c) > T(0)))
          throw NumericError("identity positivity requires strictly positive similarities");
        denom += s.scores(r, c);
      }
      loss -= std::log(s.scores(i, i) / denom);
      if (grad) {
        for (auto [r, c] : cells) (*grad)(r, c) += inv_n / denom;
        (*grad)(i, i) -= inv_n / s.scores(i, i);
      }
    }
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    direction(i, true);
    direction(i, false);
  }
  const T out = loss * inv_n;
  if (!std::isfinite(out)) throw NumericError("non-finite InfoNCE loss");
  return out;
}

template <typename T>
struct LossBreakdown {
  T total = T(0);
  T triplet_clip = T(0);
  T triplet_frame = T(0);
  T nce_clip = T(0);
  T nce_frame = T(0);
  NegativeMode mode = NegativeMode::random;
};

/// L = trip_c + trip_f + lambda_clip * nce_c + lambda_frame * nce_f, each term
/// on its own scale. A null scale (disabled branch) contributes nothing.
/// Random negatives are drawn for the clip scale first, then the frame scale.
template <typename T>
LossBreakdown<T> total_loss(const BatchSimilarities<T>* clip, const BatchSimilarities<T>* frame, const LossConfig& cfg,
                            int epoch, Rng& rng, Mat<T>* dclip = nullptr, Mat<T>* dframe = nullptr) {
  cfg.validate();
  if (!clip && !frame) throw ConfigError("total_loss: no similarity scale enabled");
  if (clip && frame) require_shape(clip->size() == frame->size(), "total_loss: clip/frame batch sizes differ");
  LossBreakdown<T> out;
  out.mode = cfg.mode_for_epoch(epoch);
  const T margin = static_cast<T>(cfg.margin);
  Mat<T> g;
  if (cfg.use_triplet) {
    if (clip) out.triplet_clip = triplet_loss<T>(*clip, margin, out.mode, rng, dclip);
    if (frame) out.triplet_frame = triplet_loss<T>(*frame, margin, out.mode, rng, dframe);
  }
  if (cfg.use_nce) {
    if (clip) {
      g = Mat<T>::Zero(clip->size(), clip->size());
      out.nce_clip = info_nce<T>(*clip, cfg, dclip ? &g : nullptr);
      if (dclip) *dclip += static_cast<T>(cfg.lambda_clip) * g;
    }
    if (frame) {
      g = Mat<T>::Zero(frame->size(), frame->size());
      out.nce_frame = info_nce<T>(*frame, cfg, dframe ? &g : nullptr);
      if (dframe) *dframe += static_cast<T>(cfg.lambda_frame) * g;
    }
  }
  out.total = out.triplet_clip + out.triplet_frame + static_cast<T>(cfg.lambda_clip) * out.nce_clip +
              static_cast<T>(cfg.lambda_frame) * out.nce_frame;
  if (!std::isfinite(out.total)) throw NumericError("non-finite total loss");
  return out;
}

}  // namespace mssl
