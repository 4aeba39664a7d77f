#pragma once

// Dense primitives with explicit forward/backward pairs. Backward functions
// accumulate (+=) into parameter gradients and return input gradients.

#include <atomic>
#include <cmath>
#include <cstdint>

#include "mssl/nn/tensor.hpp"

namespace mssl::nn {

/// Numerically stable softmax of a vector.
template <typename T>
Vec<T> softmax(const Vec<T>& logits) {
  require_shape(logits.size() > 0, "softmax of empty vector");
  const T mx = logits.maxCoeff();
  Vec<T> e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

/// Softmax Jacobian-vector product: grad wrt logits given grad wrt probs.
template <typename T>
Vec<T> softmax_backward(const Vec<T>& probs, const Vec<T>& dprobs) {
  const T dot = probs.dot(dprobs);
  return (probs.array() * (dprobs.array() - dot)).matrix();
}

// ---------------------------------------------------------------------------
// Linear + ReLU

template <typename T>
Mat<T> fc_relu(const Mat<T>& x, const Mat<T>& w, const Mat<T>& b) {
  require_shape(w.cols() == x.rows(), "fc_relu: W is " + std::to_string(w.rows()) + "x" +
                                          std::to_string(w.cols()) + ", input has " + std::to_string(x.rows()) +
                                          " rows");
  require_shape(b.rows() == w.rows() && b.cols() == 1, "fc_relu: bias");
  Mat<T> y = w * x;
  y.colwise() += b.col(0);
  return y.cwiseMax(T(0));
}

/// y is the forward output; the ReLU mask is y > 0.
template <typename T>
Mat<T> fc_relu_backward(const Mat<T>& x, const Mat<T>& w, const Mat<T>& y, const Mat<T>& dy, Mat<T>& dw,
                        Mat<T>& db) {
  const Mat<T> dpre = (y.array() > T(0)).select(dy, Mat<T>::Zero(dy.rows(), dy.cols()));
  dw.noalias() += dpre * x.transpose();
  db.col(0) += dpre.rowwise().sum();
  return w.transpose() * dpre;
}

// ---------------------------------------------------------------------------
// Layer normalization over each column.

template <typename T>
struct LayerNormCache {
  Mat<T> xhat;
  Vec<T> inv_std;
};

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>& gamma, const Mat<T>& beta, LayerNormCache<T>* cache) {
  require_shape(gamma.rows() == x.rows() && beta.rows() == x.rows(), "layer_norm: affine size");
  const auto d = static_cast<T>(x.rows());
  Mat<T> xhat(x.rows(), x.cols());
  Vec<T> inv_std(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const T mean = x.col(c).sum() / d;
    const Vec<T> centered = x.col(c).array() - mean;
    const T var = centered.squaredNorm() / d;
    inv_std(c) = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    xhat.col(c) = centered * inv_std(c);
  }
  Mat<T> y = (xhat.array().colwise() * gamma.col(0).array()).matrix();
  y.colwise() += beta.col(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const LayerNormCache<T>& cache, const Mat<T>& gamma, const Mat<T>& dy, Mat<T>& dgamma,
                           Mat<T>& dbeta) {
  dgamma.col(0) += (dy.array() * cache.xhat.array()).rowwise().sum().matrix();
  dbeta.col(0) += dy.rowwise().sum();
  const Mat<T> dxhat = (dy.array().colwise() * gamma.col(0).array()).matrix();
  const auto d = static_cast<T>(dy.rows());
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index c = 0; c < dy.cols(); ++c) {
    const T mean_d = dxhat.col(c).sum() / d;
    const T mean_dx = dxhat.col(c).dot(cache.xhat.col(c)) / d;
    dx.col(c) = cache.inv_std(c) * (dxhat.col(c).array() - mean_d - cache.xhat.col(c).array() * mean_dx).matrix();
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Attention pooling: q = sum_i softmax(w^T X)_i x_i.

template <typename T>
struct AttentionPool {
  Vec<T> pooled;
  Vec<T> weights;
};

template <typename T>
AttentionPool<T> attention_pool(const Mat<T>& x, const Mat<T>& w) {
  require_shape(x.cols() > 0, "attention_pool over an empty sequence");
  require_shape(w.rows() == x.rows() && w.cols() == 1, "attention_pool: w");
  AttentionPool<T> out;
  out.weights = softmax<T>(x.transpose() * w.col(0));
  out.pooled = x * out.weights;
  return out;
}

template <typename T>
Mat<T> attention_pool_backward(const Mat<T>& x, const Mat<T>& w, const AttentionPool<T>& fwd, const Vec<T>& dpooled,
                               Mat<T>& dw) {
  const Vec<T> dlogits = softmax_backward<T>(fwd.weights, x.transpose() * dpooled);
  dw.col(0) += x * dlogits;
  Mat<T> dx = dpooled * fwd.weights.transpose();
  dx.noalias() += w.col(0) * dlogits.transpose();
  return dx;
}

// ---------------------------------------------------------------------------
// Cosine similarity. A zero-norm argument yields 0 and bumps a process-wide
// counter instead of failing.

inline std::atomic<std::uint64_t>& zero_norm_cosine_count() {
  static std::atomic<std::uint64_t> count{0};
  return count;
}

template <typename T, typename A, typename B>
T cosine(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  require_shape(a.size() == b.size(), "cosine: vector lengths");
  const T na = a.norm();
  const T nb = b.norm();
  if (na == T(0) || nb == T(0)) {
    zero_norm_cosine_count().fetch_add(1, std::memory_order_relaxed);
    return T(0);
  }
  return a.dot(b) / (na * nb);
}

/// Gradients of cos(a, b) scaled by g. Zero-norm arguments have zero gradient.
template <typename T>
void cosine_backward(const Vec<T>& a, const Vec<T>& b, T g, Vec<T>* da, Vec<T>* db) {
  const T na = a.norm();
  const T nb = b.norm();
  if (na == T(0) || nb == T(0)) return;
  const T c = a.dot(b) / (na * nb);
  if (da) *da += g * (b / (na * nb) - c * a / (na * na));
  if (db) *db += g * (a / (na * nb) - c * b / (nb * nb));
}

}  // namespace mssl::nn
