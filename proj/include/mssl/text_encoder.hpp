#pragma once

#include <algorithm>
#include <string>

#include "mssl/nn/ops.hpp"
#include "mssl/nn/sequence_encoder.hpp"

namespace mssl {

/// Contextual word vectors Q (d x n_q) and the pooled sentence vector q.
template <typename T>
struct SentenceEmbedding {
  Mat<T> words;
  Vec<T> sentence;
  Vec<T> pool_weights;
};

/// Keeps the first `cap` words; further words are discarded.
template <typename T>
Mat<T> truncate_query(const Mat<T>& words, int cap) {
  if (words.cols() == 0) throw ShapeError("query has no words");
  return words.leftCols(std::min<Eigen::Index>(words.cols(), cap));
}

template <typename T>
class TextEncoder {
 public:
  struct Cache {
    typename nn::SequenceEncoder<T>::Cache seq;
    nn::AttentionPool<T> pool;
    Mat<T> contextual;
  };

  TextEncoder(int word_dim, int max_words, const nn::TransformerLayerConfig& cfg)
      : seq_("text", word_dim, max_words, cfg), pool_w_("text.pool.w", cfg.hidden, 1, nn::Init::small_normal) {}

  int max_words() const { return seq_.max_positions(); }
  int word_dim() const { return seq_.input_dim(); }

  void collect(nn::ParameterList<T>& out) {
    seq_.collect(out);
    out.push_back(&pool_w_);
  }

  SentenceEmbedding<T> encode(const Mat<T>& words, Cache& c, Rng* dropout_rng = nullptr) const {
    require_shape(words.rows() == word_dim(), "encode_query: word dim " + std::to_string(words.rows()) +
                                                  ", model expects " + std::to_string(word_dim()));
    c.contextual = seq_.forward(truncate_query(words, max_words()), c.seq, dropout_rng);
    c.pool = nn::attention_pool<T>(c.contextual, pool_w_.value);
    return {c.contextual, c.pool.pooled, c.pool.weights};
  }

  SentenceEmbedding<T> encode(const Mat<T>& words) const {
    Cache c;
    return encode(words, c);
  }

  /// Gradients wrt the contextual words (may be empty) and the pooled vector.
  void backward(const Cache& c, const Vec<T>& dsentence, const Mat<T>* dwords = nullptr) {
    Mat<T> dq = nn::attention_pool_backward<T>(c.contextual, pool_w_.value, c.pool, dsentence, pool_w_.grad);
    if (dwords) dq += *dwords;
    seq_.backward(c.seq, dq);
  }

 private:
  nn::SequenceEncoder<T> seq_;
  nn::Parameter<T> pool_w_;
};

}  // namespace mssl
