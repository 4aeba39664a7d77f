#pragma once

// Post-norm transformer encoder layer:
//   H = LN1(X + Dropout(MHA(X)))
//   Y = LN2(H + Dropout(W2 ReLU(W1 H + b1) + b2))

#include <cmath>
#include <string>
#include <vector>

#include "mssl/nn/ops.hpp"
#include "mssl/nn/parameter.hpp"
#include "mssl/rng.hpp"

namespace mssl::nn {

struct TransformerLayerConfig {
  int hidden = 384;
  int heads = 4;
  int ff_width = 0;  // 0 -> 4 * hidden
  double dropout = 0.0;

  int resolved_ff() const { return ff_width > 0 ? ff_width : 4 * hidden; }

  void validate() const {
    if (hidden <= 0 || heads <= 0) throw ConfigError("transformer: hidden and heads must be positive");
    if (hidden % heads != 0) throw ConfigError("transformer: hidden size must be divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("transformer: dropout must be in [0, 1)");
  }
};

/// Multi-head scaled dot-product self-attention. Keys carry no bias: a key
/// bias shifts every logit of a query equally and has identically zero gradient.
template <typename T>
class MultiHeadSelfAttention {
 public:
  struct Cache {
    Mat<T> x, q, k, v, concat;
    std::vector<Mat<T>> probs;  // per head, rows = query position, cols = key position
  };

  MultiHeadSelfAttention(const std::string& prefix, int hidden, int heads)
      : heads_(heads),
        wq_(prefix + ".Wq", hidden, hidden, Init::xavier),
        bq_(prefix + ".bq", hidden, 1, Init::zeros),
        wk_(prefix + ".Wk", hidden, hidden, Init::xavier),
        wv_(prefix + ".Wv", hidden, hidden, Init::xavier),
        bv_(prefix + ".bv", hidden, 1, Init::zeros),
        wo_(prefix + ".Wo", hidden, hidden, Init::xavier),
        bo_(prefix + ".bo", hidden, 1, Init::zeros) {}

  void collect(ParameterList<T>& out) { out.insert(out.end(), {&wq_, &bq_, &wk_, &wv_, &bv_, &wo_, &bo_}); }

  Mat<T> forward(const Mat<T>& x, Cache& c) const {
    const Eigen::Index d = x.rows();
    const Eigen::Index dh = d / heads_;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    c.x = x;
    c.q = wq_.value * x;
    c.q.colwise() += bq_.value.col(0);
    c.k = wk_.value * x;
    c.v = wv_.value * x;
    c.v.colwise() += bv_.value.col(0);
    c.concat.resize(d, x.cols());
    c.probs.assign(static_cast<std::size_t>(heads_), Mat<T>());
    for (int h = 0; h < heads_; ++h) {
      const auto rows = Eigen::seqN(h * dh, dh);
      Mat<T> s = scale * (c.q(rows, Eigen::all).transpose() * c.k(rows, Eigen::all));
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const T mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp().matrix();
        s.row(i) /= s.row(i).sum();
      }
      c.concat(rows, Eigen::all) = c.v(rows, Eigen::all) * s.transpose();
      c.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    Mat<T> y = wo_.value * c.concat;
    y.colwise() += bo_.value.col(0);
    return y;
  }

  Mat<T> backward(const Cache& c, const Mat<T>& dy) {
    const Eigen::Index d = c.x.rows();
    const Eigen::Index dh = d / heads_;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    wo_.grad.noalias() += dy * c.concat.transpose();
    bo_.grad.col(0) += dy.rowwise().sum();
    const Mat<T> dconcat = wo_.value.transpose() * dy;
    Mat<T> dq(d, c.x.cols()), dk(d, c.x.cols()), dv(d, c.x.cols());
    for (int h = 0; h < heads_; ++h) {
      const auto rows = Eigen::seqN(h * dh, dh);
      const Mat<T>& p = c.probs[static_cast<std::size_t>(h)];
      const Mat<T> dout = dconcat(rows, Eigen::all);
      dv(rows, Eigen::all) = dout * p;
      const Mat<T> dp = dout.transpose() * c.v(rows, Eigen::all);
      Mat<T> ds = p.cwiseProduct(dp);
      const Vec<T> rowdot = ds.rowwise().sum();
      ds -= (p.array().colwise() * rowdot.array()).matrix();
      ds *= scale;
      dq(rows, Eigen::all) = c.k(rows, Eigen::all) * ds.transpose();
      dk(rows, Eigen::all) = c.q(rows, Eigen::all) * ds;
    }
    wq_.grad.noalias() += dq * c.x.transpose();
    bq_.grad.col(0) += dq.rowwise().sum();
    wk_.grad.noalias() += dk * c.x.transpose();
    wv_.grad.noalias() += dv * c.x.transpose();
    bv_.grad.col(0) += dv.rowwise().sum();
    Mat<T> dx = wq_.value.transpose() * dq;
    dx.noalias() += wk_.value.transpose() * dk;
    dx.noalias() += wv_.value.transpose() * dv;
    return dx;
  }

 private:
  int heads_;
  Parameter<T> wq_, bq_, wk_, wv_, bv_, wo_, bo_;
};

template <typename T>
class TransformerLayer {
 public:
  struct Cache {
    typename MultiHeadSelfAttention<T>::Cache attn;
    Mat<T> attn_mask;  // inverted-dropout multipliers, empty when inactive
    LayerNormCache<T> ln1;
    Mat<T> h;
    Mat<T> ff_hidden;
    Mat<T> ff_mask;
    LayerNormCache<T> ln2;
  };

  TransformerLayer(const std::string& prefix, const TransformerLayerConfig& cfg)
      : cfg_((cfg.validate(), cfg)),
        attn_(prefix + ".attn", cfg.hidden, cfg.heads),
        ln1_g_(prefix + ".ln1.gamma", cfg.hidden, 1, Init::ones),
        ln1_b_(prefix + ".ln1.beta", cfg.hidden, 1, Init::zeros),
        w1_(prefix + ".ff.W1", cfg.resolved_ff(), cfg.hidden, Init::xavier),
        b1_(prefix + ".ff.b1", cfg.resolved_ff(), 1, Init::zeros),
        w2_(prefix + ".ff.W2", cfg.hidden, cfg.resolved_ff(), Init::xavier),
        b2_(prefix + ".ff.b2", cfg.hidden, 1, Init::zeros),
        ln2_g_(prefix + ".ln2.gamma", cfg.hidden, 1, Init::ones),
        ln2_b_(prefix + ".ln2.beta", cfg.hidden, 1, Init::zeros) {}

  const TransformerLayerConfig& config() const { return cfg_; }

  void collect(ParameterList<T>& out) {
    attn_.collect(out);
    out.insert(out.end(), {&ln1_g_, &ln1_b_, &w1_, &b1_, &w2_, &b2_, &ln2_g_, &ln2_b_});
  }

  /// dropout_rng == nullptr disables dropout (inference and deterministic runs).
  Mat<T> forward(const Mat<T>& x, Cache& c, Rng* dropout_rng = nullptr) const {
    if (x.cols() == 0) throw ShapeError("transformer_layer: empty sequence");
    require_shape(x.rows() == cfg_.hidden, "transformer_layer: input has " + std::to_string(x.rows()) +
                                               " rows, hidden size is " + std::to_string(cfg_.hidden));
    Mat<T> a = attn_.forward(x, c.attn);
    apply_dropout(a, c.attn_mask, dropout_rng);
    c.h = layer_norm<T>(x + a, ln1_g_.value, ln1_b_.value, &c.ln1);
    c.ff_hidden = w1_.value * c.h;
    c.ff_hidden.colwise() += b1_.value.col(0);
    c.ff_hidden = c.ff_hidden.cwiseMax(T(0));
    Mat<T> g = w2_.value * c.ff_hidden;
    g.colwise() += b2_.value.col(0);
    apply_dropout(g, c.ff_mask, dropout_rng);
    return layer_norm<T>(c.h + g, ln2_g_.value, ln2_b_.value, &c.ln2);
  }

  Mat<T> forward(const Mat<T>& x) const {
    Cache c;
    return forward(x, c, nullptr);
  }

  Mat<T> backward(const Cache& c, const Mat<T>& dy) {
    const Mat<T> dsum2 = layer_norm_backward<T>(c.ln2, ln2_g_.value, dy, ln2_g_.grad, ln2_b_.grad);
    Mat<T> dg = dsum2;
    if (c.ff_mask.size()) dg = dg.cwiseProduct(c.ff_mask);
    w2_.grad.noalias() += dg * c.ff_hidden.transpose();
    b2_.grad.col(0) += dg.rowwise().sum();
    Mat<T> dhid = w2_.value.transpose() * dg;
    dhid = (c.ff_hidden.array() > T(0)).select(dhid, Mat<T>::Zero(dhid.rows(), dhid.cols()));
    w1_.grad.noalias() += dhid * c.h.transpose();
    b1_.grad.col(0) += dhid.rowwise().sum();
    Mat<T> dh = dsum2;
    dh.noalias() += w1_.value.transpose() * dhid;
    const Mat<T> dsum1 = layer_norm_backward<T>(c.ln1, ln1_g_.value, dh, ln1_g_.grad, ln1_b_.grad);
    Mat<T> da = dsum1;
    if (c.attn_mask.size()) da = da.cwiseProduct(c.attn_mask);
    Mat<T> dx = dsum1;
    dx += attn_.backward(c.attn, da);
    return dx;
  }

 private:
  void apply_dropout(Mat<T>& m, Mat<T>& mask, Rng* rng) const {
    if (!rng || cfg_.dropout <= 0.0) {
      mask.resize(0, 0);
      return;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - cfg_.dropout));
    mask.resize(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i)
      mask.data()[i] = rng->uniform() < cfg_.dropout ? T(0) : keep_scale;
    m = m.cwiseProduct(mask);
  }

  TransformerLayerConfig cfg_;
  MultiHeadSelfAttention<T> attn_;
  Parameter<T> ln1_g_, ln1_b_, w1_, b1_, w2_, b2_, ln2_g_, ln2_b_;
};

}  // namespace mssl::nn
