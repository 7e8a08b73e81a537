#include "vrdone/attention.hpp"

#include <algorithm>
#include <stdexcept>

namespace vrdone {

void AttentionConfig::validate() const {
  if (dim <= 0) throw std::invalid_argument("attention: dim must be positive");
  if (heads <= 0 || dim % heads != 0) throw std::invalid_argument("attention: heads must divide dim");
  if (window < 1 || window % 2 == 0) throw std::invalid_argument("attention: window must be odd and >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw std::invalid_argument("attention: dropout_rate in [0,1)");
  if (droppath_rate < 0.0 || droppath_rate >= 1.0) throw std::invalid_argument("attention: droppath_rate in [0,1)");
}

MaskedSequence make_sequence(Matrix values, Mask valid) {
  if (static_cast<Index>(valid.size()) != values.rows()) {
    throw std::invalid_argument("sequence mask length differs from row count");
  }
  return {ag::Var(std::move(values)), std::move(valid)};
}

Mask all_valid(Index length) { return Mask(static_cast<std::size_t>(length), 1); }

MultiHeadAttention::MultiHeadAttention(nn::ParameterStore& store, const std::string& name,
                                       Index dim, int heads)
    : wq_(store, name + ".q", dim, dim),
      wk_(store, name + ".k", dim, dim),
      wv_(store, name + ".v", dim, dim),
      wo_(store, name + ".o", dim, dim),
      heads_(heads) {
  if (heads <= 0 || dim % heads != 0) throw std::invalid_argument("attention: heads must divide dim");
}

ag::Var MultiHeadAttention::forward(nn::Context& ctx, const ag::Var& q, const ag::Var& k,
                                    const ag::Var& v, const Mask& key_valid, int radius) const {
  if (q.cols() != k.cols() || k.cols() != v.cols()) {
    throw std::invalid_argument("attention: feature width mismatch");
  }
  if (k.rows() != v.rows()) throw std::invalid_argument("attention: key/value length mismatch");
  ag::Var core = ag::attention(wq_(ctx, q), wk_(ctx, k), wv_(ctx, v), heads_, radius, key_valid);
  ag::Var out = wo_(ctx, core);

  const Index lq = q.rows();
  const Index lk = k.rows();
  Mask has_key(static_cast<std::size_t>(lq), 0);
  bool all = true;
  for (Index i = 0; i < lq; ++i) {
    Index a = 0, b = lk - 1;
    if (radius >= 0) {
      a = std::max<Index>(0, i - radius);
      b = std::min<Index>(lk - 1, i + radius);
    }
    for (Index j = a; j <= b; ++j) {
      if (key_valid[static_cast<std::size_t>(j)]) {
        has_key[static_cast<std::size_t>(i)] = 1;
        break;
      }
    }
    all = all && has_key[static_cast<std::size_t>(i)];
  }
  return all ? out : ag::mask_rows(out, has_key);
}

ag::Var multi_head_attention(nn::Context& ctx, const MultiHeadAttention& mha,
                             const MaskedSequence& q, const MaskedSequence& k,
                             const MaskedSequence& v) {
  if (k.length() != v.length()) throw std::invalid_argument("attention: key/value length mismatch");
  Mask kv_valid(k.valid.size());
  for (std::size_t i = 0; i < kv_valid.size(); ++i) kv_valid[i] = k.valid[i] && v.valid[i];
  return mha.forward(ctx, q.values, k.values, v.values, kv_valid, -1);
}

ag::Var local_msa(nn::Context& ctx, const MultiHeadAttention& mha, const MaskedSequence& x,
                  const AttentionConfig& cfg) {
  return mha.forward(ctx, x.values, x.values, x.values, x.valid, cfg.radius());
}

ag::Var local_mca(nn::Context& ctx, const MultiHeadAttention& mha, const MaskedSequence& x,
                  const MaskedSequence& y, const AttentionConfig& cfg) {
  if (x.length() != y.length()) throw std::invalid_argument("local_mca: sequences must be aligned");
  return mha.forward(ctx, x.values, y.values, y.values, y.valid, cfg.radius());
}

EncoderBlock::EncoderBlock(nn::ParameterStore& store, const std::string& name,
                           const AttentionConfig& cfg)
    : cfg_(cfg),
      norm_attn_(store, name + ".norm_attn", cfg.dim),
      attn_(store, name + ".attn", cfg.dim, cfg.heads),
      norm_mlp_(store, name + ".norm_mlp", cfg.dim),
      mlp_(store, name + ".mlp", cfg.dim, 4 * cfg.dim, cfg.dim, cfg.dropout_rate) {
  cfg.validate();
}

MaskedSequence EncoderBlock::operator()(nn::Context& ctx, const MaskedSequence& x) const {
  MaskedSequence normed{norm_attn_(ctx, x.values), x.valid};
  ag::Var attn = nn::dropout(ctx, local_msa(ctx, attn_, normed, cfg_), cfg_.dropout_rate);
  ag::Var h = ag::add(x.values, nn::drop_path(ctx, attn, cfg_.droppath_rate));
  ag::Var ff = mlp_(ctx, norm_mlp_(ctx, h));
  return {ag::add(h, nn::drop_path(ctx, ff, cfg_.droppath_rate)), x.valid};
}

}  // namespace vrdone
