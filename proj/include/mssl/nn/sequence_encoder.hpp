#pragma once

#include <string>

#include "mssl/nn/ops.hpp"
#include "mssl/nn/parameter.hpp"
#include "mssl/nn/transformer.hpp"

namespace mssl::nn {

/// Transformer(FC_ReLU(X) + PE) over a d_in x n sequence, n <= max_positions.
template <typename T>
class SequenceEncoder {
 public:
  struct Cache {
    Mat<T> input;
    Mat<T> projected;  // FC_ReLU output, before positional embedding
    typename TransformerLayer<T>::Cache layer;
  };

  SequenceEncoder(const std::string& prefix, int input_dim, int max_positions, const TransformerLayerConfig& cfg)
      : input_dim_(input_dim),
        fc_w_(prefix + ".fc.W", cfg.hidden, input_dim, Init::xavier),
        fc_b_(prefix + ".fc.b", cfg.hidden, 1, Init::zeros),
        pos_(prefix + ".pos", cfg.hidden, max_positions, Init::small_normal),
        layer_(prefix + ".transformer", cfg) {
    if (input_dim <= 0 || max_positions <= 0) throw ConfigError(prefix + ": dimensions must be positive");
  }

  int input_dim() const { return input_dim_; }
  int max_positions() const { return static_cast<int>(pos_.value.cols()); }
  int hidden() const { return static_cast<int>(fc_w_.value.rows()); }

  void collect(ParameterList<T>& out) {
    out.insert(out.end(), {&fc_w_, &fc_b_, &pos_});
    layer_.collect(out);
  }

  Mat<T> forward(const Mat<T>& x, Cache& c, Rng* dropout_rng = nullptr) const {
    require_shape(x.rows() == input_dim_, fc_w_.name + ": input dim " + std::to_string(x.rows()) + ", expected " +
                                              std::to_string(input_dim_));
    if (x.cols() == 0) throw ShapeError(fc_w_.name + ": empty sequence");
    require_shape(x.cols() <= max_positions(), fc_w_.name + ": sequence longer than positional table");
    c.input = x;
    c.projected = fc_relu<T>(x, fc_w_.value, fc_b_.value);
    const Mat<T> with_pos = c.projected + pos_.value.leftCols(x.cols());
    return layer_.forward(with_pos, c.layer, dropout_rng);
  }

  Mat<T> forward(const Mat<T>& x) const {
    Cache c;
    return forward(x, c);
  }

  /// Accumulates parameter gradients; returns the gradient wrt the input.
  Mat<T> backward(const Cache& c, const Mat<T>& dy) {
    const Mat<T> dsum = layer_.backward(c.layer, dy);
    pos_.grad.leftCols(dsum.cols()) += dsum;
    return fc_relu_backward<T>(c.input, fc_w_.value, c.projected, dsum, fc_w_.grad, fc_b_.grad);
  }

 private:
  int input_dim_;
  Parameter<T> fc_w_, fc_b_, pos_;
  TransformerLayer<T> layer_;
};

}  // namespace mssl::nn
