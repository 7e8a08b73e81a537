#pragma once

#include "vrdone/bsa.hpp"
#include "vrdone/model_config.hpp"
#include "vrdone/pair_sample.hpp"

#include <vector>

namespace vrdone {

/// Multi-resolution features; level k has ceil(l / 2^k) rows.
struct FeaturePyramid {
  std::vector<ag::Var> levels;
  std::vector<Mask> masks;
};

/// Pyramid level lengths produced for an input of `length` frames.
std::vector<Index> pyramid_lengths(Index length, int encoder_blocks);

/// Stack of local encoder blocks with stride-2 max pooling after each block.
class RelationEncoder {
 public:
  RelationEncoder() = default;
  RelationEncoder(nn::ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                  int blocks);

  FeaturePyramid operator()(nn::Context& ctx, const PairEmbedding& e_so) const;

 private:
  std::vector<EncoderBlock> blocks_;
};

/// Top-down decoder: from the coarsest level, upsample x2 and add the
/// laterally projected next-finer level, down to full resolution.
class MaskDecoder {
 public:
  MaskDecoder() = default;
  MaskDecoder(nn::ParameterStore& store, const std::string& name, Index dim, int levels,
              UpsampleMode mode);

  ag::Var operator()(nn::Context& ctx, const FeaturePyramid& pyramid) const;

 private:
  std::vector<nn::Linear> laterals_;
  nn::Linear out_;
  UpsampleMode mode_ = UpsampleMode::kNearest;
};

/// Query decoder with global self-attention among queries and global
/// cross-attention into the coarsest pyramid level.
class RelationDecoder {
 public:
  RelationDecoder() = default;
  RelationDecoder(nn::ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                  int layers, int num_queries);

  /// Returns the normalised output of every layer; the last entry is z_cls.
  std::vector<ag::Var> operator()(nn::Context& ctx, const ag::Var& z, const Mask& z_valid) const;
  /// Same, starting from explicit query embeddings instead of the learned ones.
  std::vector<ag::Var> decode(nn::Context& ctx, ag::Var queries, const ag::Var& z,
                              const Mask& z_valid) const;
  nn::Parameter& queries() const { return *queries_; }

 private:
  struct Layer {
    nn::LayerNorm norm_self;
    MultiHeadAttention self_attn;
    nn::LayerNorm norm_cross;
    MultiHeadAttention cross_attn;
    nn::LayerNorm norm_mlp;
    nn::Mlp mlp;
  };
  AttentionConfig cfg_;
  nn::Parameter* queries_ = nullptr;
  nn::LayerNorm memory_norm_;
  std::vector<Layer> layers_;
  nn::LayerNorm out_norm_;
};

struct ModelOutput {
  ag::Var class_logits;  // N_q x (P + 1)
  ag::Var mask_logits;   // N_q x l_so
  std::vector<std::pair<ag::Var, ag::Var>> aux;  // intermediate decoder layers, when enabled

  OutputValues values() const { return {class_logits.value(), mask_logits.value()}; }
};

/// Classification head and dot-product mask head.
class PredictionHeads {
 public:
  PredictionHeads() = default;
  PredictionHeads(nn::ParameterStore& store, const std::string& name, Index dim, int num_predicates);

  std::pair<ag::Var, ag::Var> operator()(nn::Context& ctx, const ag::Var& z_cls,
                                         const ag::Var& z_msk) const;

 private:
  nn::Linear cls_;
  nn::Mlp mask_embed_;
};

/// The full one-stage detector.
class VrdModel {
 public:
  explicit VrdModel(const ModelConfig& cfg);
  VrdModel(const VrdModel&) = delete;
  VrdModel& operator=(const VrdModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }

  ModelOutput forward(nn::Context& ctx, const PairSample& pair) const;
  /// Eval-mode forward without gradient recording.
  OutputValues predict(const PairSample& pair) const;
  std::vector<OutputValues> predict_batch(const std::vector<PairSample>& pairs) const;

  // Stages, exposed for testing.
  const EntityEmbedder& embedder() const { return embed_; }
  const ExtraFeatureFusion& extra_fusion() const { return extra_; }
  const SubjectObjectSynergy& synergy() const { return sos_; }
  const PairFusion& pair_fusion() const { return fuse_; }
  const RelationEncoder& encoder() const { return encoder_; }
  const MaskDecoder& mask_decoder() const { return mask_decoder_; }
  const RelationDecoder& relation_decoder() const { return decoder_; }
  const PredictionHeads& heads() const { return heads_; }

 private:
  ModelConfig cfg_;
  nn::ParameterStore store_;
  ExtraFeatureFusion extra_;
  EntityEmbedder embed_;
  SubjectObjectSynergy sos_;
  PairFusion fuse_;
  RelationEncoder encoder_;
  MaskDecoder mask_decoder_;
  RelationDecoder decoder_;
  PredictionHeads heads_;
};

}  // namespace vrdone
