#include "vrdone/model_config.hpp"

#include "vrdone/json_fields.hpp"

#include <stdexcept>

namespace vrdone {

std::string to_string(SosMode mode) {
  switch (mode) {
    case SosMode::kIab: return "iab";
    case SosMode::kCross: return "cross";
    case SosMode::kEmbeddingOnly: return "embedding_only";
  }
  return "iab";
}

SosMode sos_mode_from_string(const std::string& s) {
  if (s == "iab") return SosMode::kIab;
  if (s == "cross") return SosMode::kCross;
  if (s == "embedding_only") return SosMode::kEmbeddingOnly;
  throw detail::ConfigError("unknown sos_mode '" + s + "' (expected iab, cross, embedding_only)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw detail::ConfigError("model." + m); };
  if (feature_dim <= 0) fail("feature_dim must be positive");
  if (extra_dim < 0) fail("extra_dim must be >= 0");
  if (sos_layers < 0) fail("sos_layers must be >= 0");
  if (encoder_blocks < 0) fail("encoder_blocks must be >= 0");
  if (decoder_layers < 0) fail("decoder_layers must be >= 0");
  if (num_queries <= 0) fail("num_queries must be positive");
  if (num_predicates <= 0) fail("num_predicates must be positive");
  if (rel_conv_kernel < 1 || rel_conv_kernel % 2 == 0) fail("rel_conv_kernel must be odd");
  try {
    attention().validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

AttentionConfig ModelConfig::attention() const {
  return {dim, heads, window, dropout, droppath};
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"feature_dim", c.feature_dim},
       {"extra_dim", c.extra_dim},
       {"dim", c.dim},
       {"heads", c.heads},
       {"window", c.window},
       {"dropout", c.dropout},
       {"droppath", c.droppath},
       {"sos_layers", c.sos_layers},
       {"sos_mode", to_string(c.sos_mode)},
       {"encoder_blocks", c.encoder_blocks},
       {"decoder_layers", c.decoder_layers},
       {"num_queries", c.num_queries},
       {"num_predicates", c.num_predicates},
       {"rel_conv_kernel", c.rel_conv_kernel},
       {"upsample", c.upsample == UpsampleMode::kLinear ? "linear" : "nearest"},
       {"aux_loss", c.aux_loss},
       {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const std::string p = "model";
  detail::reject_unknown(j,
                         {"feature_dim", "extra_dim", "dim", "heads", "window", "dropout", "droppath",
                          "sos_layers", "sos_mode", "encoder_blocks", "decoder_layers", "num_queries",
                          "num_predicates", "rel_conv_kernel", "upsample", "aux_loss", "init_seed"},
                         p);
  detail::read_optional(j, "feature_dim", c.feature_dim, p);
  detail::read_optional(j, "extra_dim", c.extra_dim, p);
  detail::read_optional(j, "dim", c.dim, p);
  detail::read_optional(j, "heads", c.heads, p);
  detail::read_optional(j, "window", c.window, p);
  detail::read_optional(j, "dropout", c.dropout, p);
  detail::read_optional(j, "droppath", c.droppath, p);
  detail::read_optional(j, "sos_layers", c.sos_layers, p);
  std::string mode = to_string(c.sos_mode);
  detail::read_optional(j, "sos_mode", mode, p);
  c.sos_mode = sos_mode_from_string(mode);
  detail::read_optional(j, "encoder_blocks", c.encoder_blocks, p);
  detail::read_optional(j, "decoder_layers", c.decoder_layers, p);
  detail::read_optional(j, "num_queries", c.num_queries, p);
  detail::read_optional(j, "num_predicates", c.num_predicates, p);
  detail::read_optional(j, "rel_conv_kernel", c.rel_conv_kernel, p);
  std::string up = c.upsample == UpsampleMode::kLinear ? "linear" : "nearest";
  detail::read_optional(j, "upsample", up, p);
  if (up != "linear" && up != "nearest") throw detail::ConfigError("model.upsample: expected nearest or linear");
  c.upsample = up == "linear" ? UpsampleMode::kLinear : UpsampleMode::kNearest;
  detail::read_optional(j, "aux_loss", c.aux_loss, p);
  detail::read_optional(j, "init_seed", c.init_seed, p);
  c.validate();
}

}  // namespace vrdone
