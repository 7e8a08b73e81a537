#pragma once

#include "vrdone/attention.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace vrdone {

/// How the subject-object synergy layers mix the two streams.
enum class SosMode {
  kIab,            // local self-attention then local cross-attention
  kCross,          // local cross-attention only
  kEmbeddingOnly,  // embedding layer, no stream exchange
};

std::string to_string(SosMode mode);
SosMode sos_mode_from_string(const std::string& s);

enum class UpsampleMode { kNearest, kLinear };

struct ModelConfig {
  Index feature_dim = 512;  // C_in of tracklet features
  Index extra_dim = 0;      // width of extra per-frame features; 0 disables fusion
  Index dim = 512;
  int heads = 8;
  int window = 9;
  double dropout = 0.0;
  double droppath = 0.1;
  int sos_layers = 2;
  SosMode sos_mode = SosMode::kIab;
  int encoder_blocks = 3;
  int decoder_layers = 4;
  int num_queries = 9;
  int num_predicates = 50;
  int rel_conv_kernel = 3;
  UpsampleMode upsample = UpsampleMode::kNearest;
  bool aux_loss = false;
  std::uint64_t init_seed = 0;

  void validate() const;
  AttentionConfig attention() const;
  /// Minimum padded pair length accepted by the relation encoder.
  Index min_length() const { return Index{1} << encoder_blocks; }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace vrdone
