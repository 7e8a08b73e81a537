#pragma once

#include "vrdone/attention.hpp"
#include "vrdone/model_config.hpp"

#include <vector>

namespace vrdone {

using EntityEmbedding = MaskedSequence;
using PairEmbedding = MaskedSequence;

/// e = MLP(concat(f, theta_a)), applied frame by frame.
class EntityEmbedder {
 public:
  EntityEmbedder() = default;
  EntityEmbedder(nn::ParameterStore& store, const std::string& name, Index feature_dim, Index dim);

  EntityEmbedding operator()(nn::Context& ctx, const ag::Var& features, const ag::Var& theta_a,
                             const Mask& valid) const;

 private:
  nn::Mlp mlp_;
};

/// f := MLP(concat(f, f_extra)); identity when constructed without extra features.
class ExtraFeatureFusion {
 public:
  ExtraFeatureFusion() = default;
  ExtraFeatureFusion(nn::ParameterStore& store, const std::string& name, Index feature_dim,
                     Index extra_dim);

  bool enabled() const { return enabled_; }
  ag::Var operator()(nn::Context& ctx, const ag::Var& features, const ag::Var& extra) const;

 private:
  bool enabled_ = false;
  nn::Mlp mlp_;
};

/// One subject-object synergy layer: per-stream embedding block, then the
/// interactive attention block exchanging information between streams.
class SynergyLayer {
 public:
  SynergyLayer() = default;
  SynergyLayer(nn::ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
               SosMode mode);

  std::pair<EntityEmbedding, EntityEmbedding> operator()(nn::Context& ctx, const EntityEmbedding& s,
                                                         const EntityEmbedding& o) const;

 private:
  struct Stream {
    EncoderBlock embed;
    nn::LayerNorm norm_self;
    MultiHeadAttention self_attn;
    nn::LayerNorm norm_query;
    nn::LayerNorm norm_other;
    MultiHeadAttention cross_attn;
  };
  Stream make_stream(nn::ParameterStore& store, const std::string& name) const;
  ag::Var interact(nn::Context& ctx, const Stream& st, const EntityEmbedding& own,
                   const EntityEmbedding& other) const;

  AttentionConfig cfg_;
  SosMode mode_ = SosMode::kIab;
  Stream subject_;
  Stream object_;
};

class SubjectObjectSynergy {
 public:
  SubjectObjectSynergy() = default;
  SubjectObjectSynergy(nn::ParameterStore& store, const std::string& name,
                       const AttentionConfig& cfg, SosMode mode, int layers);

  /// Zero layers is the identity on both streams.
  std::pair<EntityEmbedding, EntityEmbedding> operator()(nn::Context& ctx, EntityEmbedding s,
                                                         EntityEmbedding o) const;
  int layers() const { return static_cast<int>(layers_.size()); }

 private:
  std::vector<SynergyLayer> layers_;
};

/// e_so = MLP(concat(MLP(concat(e_s, e_o)), Conv1D(theta_r))).
class PairFusion {
 public:
  PairFusion() = default;
  PairFusion(nn::ParameterStore& store, const std::string& name, Index dim, int conv_kernel);

  PairEmbedding operator()(nn::Context& ctx, const EntityEmbedding& s, const EntityEmbedding& o,
                           const ag::Var& theta_r) const;

 private:
  nn::Mlp pair_mlp_;
  nn::Linear rel_conv_;
  int kernel_ = 3;
  nn::Mlp out_mlp_;
};

}  // namespace vrdone
