#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/nn/ops.hpp"

namespace ccat::nn {

/// Projection weights of one self-attention layer. Matrices are [D,D], biases [D].
template <class T>
struct AttentionWeights {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Scaled dot-product self-attention over the rows of x [T,D], split into
/// `heads` heads of width D/heads. Keys whose mask entry is 0 get exactly
/// zero weight. The residual connection is left to the caller.
/// When `probs` is non-null it receives one [T,T] probability tensor per head.
template <class T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x, const AttentionWeights<T>& w, int heads,
                                    std::span<const std::uint8_t> key_mask,
                                    std::vector<Tensor<T>>* probs = nullptr) {
  detail::require_rank(x, 2, "multi_head_self_attention");
  const int D = x.dim(1);
  if (heads < 1 || D % heads != 0)
    throw ConfigError("model width " + std::to_string(D) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  const int dh = D / heads;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(dh));

  const auto q = dense(x, w.wq, std::optional<Tensor<T>>(w.bq));
  const auto k = dense(x, w.wk, std::optional<Tensor<T>>(w.bk));
  const auto v = dense(x, w.wv, std::optional<Tensor<T>>(w.bv));

  std::vector<Tensor<T>> head_out;
  head_out.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto qh = slice_cols(q, h * dh, dh);
    const auto kh = slice_cols(k, h * dh, dh);
    const auto vh = slice_cols(v, h * dh, dh);
    const auto logits = scale(matmul_nt(qh, kh), scale_factor);
    const auto p = masked_softmax_rows(logits, key_mask);
    if (probs) probs->push_back(p);
    head_out.push_back(matmul(p, vh));
  }
  const auto merged = heads == 1 ? head_out.front() : concat_cols(head_out);
  return dense(merged, w.wo, std::optional<Tensor<T>>(w.bo));
}

/// Post-norm encoder block: x + MHSA -> LN, then x + FF(ReLU) -> LN.
template <class T>
struct EncoderWeights {
  AttentionWeights<T> attn;
  Tensor<T> ln1_gain, ln1_bias, ff1_w, ff1_b, ff2_w, ff2_b, ln2_gain, ln2_bias;
};

template <class T, class Rng>
Tensor<T> encoder_block(const Tensor<T>& x, const EncoderWeights<T>& w, int heads,
                        std::span<const std::uint8_t> key_mask, double dropout_rate, bool training, Rng& rng) {
  const auto att = dropout(multi_head_self_attention(x, w.attn, heads, key_mask), dropout_rate, training, rng);
  const auto y = layer_norm(add(x, att), w.ln1_gain, w.ln1_bias);
  auto ff = relu(dense(y, w.ff1_w, std::optional<Tensor<T>>(w.ff1_b)));
  ff = dropout(dense(ff, w.ff2_w, std::optional<Tensor<T>>(w.ff2_b)), dropout_rate, training, rng);
  return layer_norm(add(y, ff), w.ln2_gain, w.ln2_bias);
}

}  // namespace ccat::nn
