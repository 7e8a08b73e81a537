#include "vrdone/bsa.hpp"

#include <stdexcept>

namespace vrdone {

EntityEmbedder::EntityEmbedder(nn::ParameterStore& store, const std::string& name,
                               Index feature_dim, Index dim)
    : mlp_(store, name, feature_dim + 8, dim, dim) {}

EntityEmbedding EntityEmbedder::operator()(nn::Context& ctx, const ag::Var& features,
                                           const ag::Var& theta_a, const Mask& valid) const {
  if (features.rows() != theta_a.rows()) {
    throw std::invalid_argument("embed_entity: features and positional rows differ");
  }
  if (theta_a.cols() != 8) throw std::invalid_argument("embed_entity: theta_a must have 8 columns");
  return {mlp_(ctx, ag::concat_cols({features, theta_a})), valid};
}

ExtraFeatureFusion::ExtraFeatureFusion(nn::ParameterStore& store, const std::string& name,
                                       Index feature_dim, Index extra_dim)
    : enabled_(extra_dim > 0) {
  if (enabled_) mlp_ = nn::Mlp(store, name, feature_dim + extra_dim, feature_dim, feature_dim);
}

ag::Var ExtraFeatureFusion::operator()(nn::Context& ctx, const ag::Var& features,
                                       const ag::Var& extra) const {
  if (!enabled_) return features;
  if (!extra.defined() || extra.rows() != features.rows()) {
    throw std::invalid_argument("fuse_extra_features: extra features missing or misaligned");
  }
  return mlp_(ctx, ag::concat_cols({features, extra}));
}

SynergyLayer::Stream SynergyLayer::make_stream(nn::ParameterStore& store,
                                               const std::string& name) const {
  Stream st;
  st.embed = EncoderBlock(store, name + ".embed", cfg_);
  if (mode_ != SosMode::kEmbeddingOnly) {
    if (mode_ == SosMode::kIab) {
      st.norm_self = nn::LayerNorm(store, name + ".norm_self", cfg_.dim);
      st.self_attn = MultiHeadAttention(store, name + ".self_attn", cfg_.dim, cfg_.heads);
    }
    st.norm_query = nn::LayerNorm(store, name + ".norm_query", cfg_.dim);
    st.norm_other = nn::LayerNorm(store, name + ".norm_other", cfg_.dim);
    st.cross_attn = MultiHeadAttention(store, name + ".cross_attn", cfg_.dim, cfg_.heads);
  }
  return st;
}

SynergyLayer::SynergyLayer(nn::ParameterStore& store, const std::string& name,
                           const AttentionConfig& cfg, SosMode mode)
    : cfg_(cfg), mode_(mode) {
  subject_ = make_stream(store, name + ".subject");
  object_ = make_stream(store, name + ".object");
}

ag::Var SynergyLayer::interact(nn::Context& ctx, const Stream& st, const EntityEmbedding& own,
                               const EntityEmbedding& other) const {
  EntityEmbedding query = own;
  if (mode_ == SosMode::kIab) {
    query.values = local_msa(ctx, st.self_attn, {st.norm_self(ctx, own.values), own.valid}, cfg_);
  }
  ag::Var mixed = local_mca(ctx, st.cross_attn, {st.norm_query(ctx, query.values), own.valid},
                            {st.norm_other(ctx, other.values), other.valid}, cfg_);
  return ag::add(own.values, nn::drop_path(ctx, mixed, cfg_.droppath_rate));
}

std::pair<EntityEmbedding, EntityEmbedding> SynergyLayer::operator()(
    nn::Context& ctx, const EntityEmbedding& s, const EntityEmbedding& o) const {
  EntityEmbedding hs = subject_.embed(ctx, s);
  EntityEmbedding ho = object_.embed(ctx, o);
  if (mode_ == SosMode::kEmbeddingOnly) return {hs, ho};
  EntityEmbedding out_s{interact(ctx, subject_, hs, ho), hs.valid};
  EntityEmbedding out_o{interact(ctx, object_, ho, hs), ho.valid};
  return {out_s, out_o};
}

SubjectObjectSynergy::SubjectObjectSynergy(nn::ParameterStore& store, const std::string& name,
                                           const AttentionConfig& cfg, SosMode mode, int layers) {
  if (layers < 0) throw std::invalid_argument("sos: negative layer count");
  for (int l = 0; l < layers; ++l) {
    layers_.emplace_back(store, name + "." + std::to_string(l), cfg, mode);
  }
}

std::pair<EntityEmbedding, EntityEmbedding> SubjectObjectSynergy::operator()(
    nn::Context& ctx, EntityEmbedding s, EntityEmbedding o) const {
  if (s.valid != o.valid) throw std::invalid_argument("sos: subject and object masks differ");
  for (const auto& layer : layers_) {
    auto [ns, no] = layer(ctx, s, o);
    s = std::move(ns);
    o = std::move(no);
  }
  return {std::move(s), std::move(o)};
}

PairFusion::PairFusion(nn::ParameterStore& store, const std::string& name, Index dim,
                       int conv_kernel)
    : pair_mlp_(store, name + ".pair_mlp", 2 * dim, dim, dim),
      rel_conv_(store, name + ".rel_conv", 5 * conv_kernel, dim),
      kernel_(conv_kernel),
      out_mlp_(store, name + ".out_mlp", 2 * dim, dim, dim) {
  if (conv_kernel < 1 || conv_kernel % 2 == 0) {
    throw std::invalid_argument("fuse_pair: convolution kernel must be odd");
  }
}

PairEmbedding PairFusion::operator()(nn::Context& ctx, const EntityEmbedding& s,
                                     const EntityEmbedding& o, const ag::Var& theta_r) const {
  if (s.length() != o.length() || theta_r.rows() != s.length()) {
    throw std::invalid_argument("fuse_pair: sequence lengths differ");
  }
  if (theta_r.cols() != 5) throw std::invalid_argument("fuse_pair: theta_r must have 5 columns");
  ag::Var joint = pair_mlp_(ctx, ag::concat_cols({s.values, o.values}));
  // Padding rows are zeroed so the convolution cannot read them.
  ag::Var rel = rel_conv_(ctx, ag::unfold1d(ag::mask_rows(theta_r, s.valid), kernel_));
  return {out_mlp_(ctx, ag::concat_cols({joint, rel})), s.valid};
}

}  // namespace vrdone
