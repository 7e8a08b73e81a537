#pragma once

#include "vrdone/nn.hpp"

namespace vrdone {

struct AttentionConfig {
  Index dim = 512;
  int heads = 8;
  int window = 9;  // k_w, odd
  double dropout_rate = 0.0;
  double droppath_rate = 0.1;

  /// Throws std::invalid_argument on a broken invariant.
  void validate() const;
  int radius() const { return window / 2; }
};

/// A sequence plus its padding mask.
struct MaskedSequence {
  ag::Var values;
  Mask valid;

  Index length() const { return values.rows(); }
};

MaskedSequence make_sequence(Matrix values, Mask valid);
Mask all_valid(Index length);

/// Multi-head attention with separate q/k/v/o projections. The same module
/// serves global attention and the windowed variant.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(nn::ParameterStore& store, const std::string& name, Index dim, int heads);

  /// `radius < 0` is global attention. Output rows whose query sees no valid key are zero.
  ag::Var forward(nn::Context& ctx, const ag::Var& q, const ag::Var& k, const ag::Var& v,
                  const Mask& key_valid, int radius) const;

  int heads() const { return heads_; }

 private:
  nn::Linear wq_, wk_, wv_, wo_;
  int heads_ = 1;
};

/// softmax(qW^q (kW^k)^T / sqrt(d_k)) vW^v per head, concatenated and projected.
ag::Var multi_head_attention(nn::Context& ctx, const MultiHeadAttention& mha,
                             const MaskedSequence& q, const MaskedSequence& k,
                             const MaskedSequence& v);

/// Sliding-window self-attention: position i attends valid j with |i-j| <= k_w/2.
ag::Var local_msa(nn::Context& ctx, const MultiHeadAttention& mha, const MaskedSequence& x,
                  const AttentionConfig& cfg);

/// Windowed cross-attention: queries from x, keys and values from y.
ag::Var local_mca(nn::Context& ctx, const MultiHeadAttention& mha, const MaskedSequence& x,
                  const MaskedSequence& y, const AttentionConfig& cfg);

/// Pre-norm transformer block: x + LocalMSA(LN(x)), then + MLP(LN(.)) with 4x hidden width.
class EncoderBlock {
 public:
  EncoderBlock() = default;
  EncoderBlock(nn::ParameterStore& store, const std::string& name, const AttentionConfig& cfg);

  MaskedSequence operator()(nn::Context& ctx, const MaskedSequence& x) const;

 private:
  AttentionConfig cfg_;
  nn::LayerNorm norm_attn_;
  MultiHeadAttention attn_;
  nn::LayerNorm norm_mlp_;
  nn::Mlp mlp_;
};

}  // namespace vrdone
