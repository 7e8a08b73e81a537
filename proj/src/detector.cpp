#include "vrdone/detector.hpp"

#include <stdexcept>

namespace vrdone {

std::vector<Index> pyramid_lengths(Index length, int encoder_blocks) {
  std::vector<Index> out{length};
  for (int b = 0; b < encoder_blocks; ++b) out.push_back((out.back() + 1) / 2);
  return out;
}

RelationEncoder::RelationEncoder(nn::ParameterStore& store, const std::string& name,
                                 const AttentionConfig& cfg, int blocks) {
  for (int b = 0; b < blocks; ++b) blocks_.emplace_back(store, name + "." + std::to_string(b), cfg);
}

FeaturePyramid RelationEncoder::operator()(nn::Context& ctx, const PairEmbedding& e_so) const {
  const Index need = Index{1} << blocks_.size();
  if (e_so.length() < need) {
    throw std::invalid_argument("relation encoder needs at least " + std::to_string(need) +
                                " frames; pad the pair upstream (got " +
                                std::to_string(e_so.length()) + ")");
  }
  FeaturePyramid p;
  p.levels.push_back(e_so.values);
  p.masks.push_back(e_so.valid);
  MaskedSequence cur = e_so;
  for (const auto& block : blocks_) {
    MaskedSequence h = block(ctx, cur);
    Mask pooled;
    ag::Var down = ag::max_pool2(h.values, h.valid, &pooled);
    cur = {down, pooled};
    p.levels.push_back(down);
    p.masks.push_back(std::move(pooled));
  }
  return p;
}

MaskDecoder::MaskDecoder(nn::ParameterStore& store, const std::string& name, Index dim, int levels,
                         UpsampleMode mode)
    : mode_(mode) {
  for (int l = 0; l < levels; ++l) laterals_.emplace_back(store, name + ".lateral" + std::to_string(l), dim, dim);
  out_ = nn::Linear(store, name + ".out", dim, dim);
}

ag::Var MaskDecoder::operator()(nn::Context& ctx, const FeaturePyramid& pyramid) const {
  if (pyramid.levels.size() != laterals_.size()) {
    throw std::invalid_argument("mask decoder: pyramid depth mismatch");
  }
  int top = static_cast<int>(pyramid.levels.size()) - 1;
  ag::Var cur = laterals_[static_cast<std::size_t>(top)](ctx, pyramid.levels[static_cast<std::size_t>(top)]);
  for (int l = top - 1; l >= 0; --l) {
    const auto& finer = pyramid.levels[static_cast<std::size_t>(l)];
    ag::Var up = mode_ == UpsampleMode::kLinear ? ag::upsample2_linear(cur, finer.rows())
                                                : ag::upsample2(cur, finer.rows());
    cur = ag::add(up, laterals_[static_cast<std::size_t>(l)](ctx, finer));
  }
  return out_(ctx, ag::gelu(cur));
}

RelationDecoder::RelationDecoder(nn::ParameterStore& store, const std::string& name,
                                 const AttentionConfig& cfg, int layers, int num_queries)
    : cfg_(cfg) {
  queries_ = &store.normal(name + ".queries", num_queries, cfg.dim, 1.0, false);
  memory_norm_ = nn::LayerNorm(store, name + ".memory_norm", cfg.dim);
  for (int l = 0; l < layers; ++l) {
    const std::string p = name + "." + std::to_string(l);
    Layer layer;
    layer.norm_self = nn::LayerNorm(store, p + ".norm_self", cfg.dim);
    layer.self_attn = MultiHeadAttention(store, p + ".self_attn", cfg.dim, cfg.heads);
    layer.norm_cross = nn::LayerNorm(store, p + ".norm_cross", cfg.dim);
    layer.cross_attn = MultiHeadAttention(store, p + ".cross_attn", cfg.dim, cfg.heads);
    layer.norm_mlp = nn::LayerNorm(store, p + ".norm_mlp", cfg.dim);
    layer.mlp = nn::Mlp(store, p + ".mlp", cfg.dim, 4 * cfg.dim, cfg.dim, cfg.dropout_rate);
    layers_.push_back(std::move(layer));
  }
  out_norm_ = nn::LayerNorm(store, name + ".out_norm", cfg.dim);
}

std::vector<ag::Var> RelationDecoder::operator()(nn::Context& ctx, const ag::Var& z,
                                                 const Mask& z_valid) const {
  return decode(ctx, ctx.graph.param(*queries_), z, z_valid);
}

std::vector<ag::Var> RelationDecoder::decode(nn::Context& ctx, ag::Var q, const ag::Var& z,
                                             const Mask& z_valid) const {
  const Mask query_valid = all_valid(q.rows());
  ag::Var memory = memory_norm_(ctx, z);
  std::vector<ag::Var> outputs;
  for (const auto& layer : layers_) {
    ag::Var n = layer.norm_self(ctx, q);
    q = ag::add(q, nn::drop_path(ctx, layer.self_attn.forward(ctx, n, n, n, query_valid, -1),
                                 cfg_.droppath_rate));
    n = layer.norm_cross(ctx, q);
    q = ag::add(q, nn::drop_path(ctx, layer.cross_attn.forward(ctx, n, memory, memory, z_valid, -1),
                                 cfg_.droppath_rate));
    q = ag::add(q, nn::drop_path(ctx, layer.mlp(ctx, layer.norm_mlp(ctx, q)), cfg_.droppath_rate));
    outputs.push_back(out_norm_(ctx, q));
  }
  if (outputs.empty()) outputs.push_back(out_norm_(ctx, q));
  return outputs;
}

PredictionHeads::PredictionHeads(nn::ParameterStore& store, const std::string& name, Index dim,
                                 int num_predicates)
    : cls_(store, name + ".cls", dim, num_predicates + 1),
      mask_embed_(store, name + ".mask_embed", dim, dim, dim) {}

std::pair<ag::Var, ag::Var> PredictionHeads::operator()(nn::Context& ctx, const ag::Var& z_cls,
                                                        const ag::Var& z_msk) const {
  return {cls_(ctx, z_cls), ag::matmul_nt(mask_embed_(ctx, z_cls), z_msk)};
}

VrdModel::VrdModel(const ModelConfig& cfg) : cfg_(cfg), store_(cfg.init_seed) {
  cfg_.validate();
  const AttentionConfig att = cfg_.attention();
  extra_ = ExtraFeatureFusion(store_, "extra_fusion", cfg_.feature_dim, cfg_.extra_dim);
  embed_ = EntityEmbedder(store_, "entity_embed", cfg_.feature_dim, cfg_.dim);
  sos_ = SubjectObjectSynergy(store_, "sos", att, cfg_.sos_mode, cfg_.sos_layers);
  fuse_ = PairFusion(store_, "pair_fusion", cfg_.dim, cfg_.rel_conv_kernel);
  encoder_ = RelationEncoder(store_, "encoder", att, cfg_.encoder_blocks);
  mask_decoder_ = MaskDecoder(store_, "mask_decoder", cfg_.dim, cfg_.encoder_blocks + 1, cfg_.upsample);
  decoder_ = RelationDecoder(store_, "decoder", att, cfg_.decoder_layers, cfg_.num_queries);
  heads_ = PredictionHeads(store_, "heads", cfg_.dim, cfg_.num_predicates);
}

ModelOutput VrdModel::forward(nn::Context& ctx, const PairSample& pair) const {
  const Index len = pair.length();
  auto check = [&](const Matrix& m, Index cols, const char* what) {
    if (m.rows() != len || m.cols() != cols) {
      throw std::invalid_argument(std::string("forward: ") + what + " has shape " +
                                  std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                  ", expected " + std::to_string(len) + "x" + std::to_string(cols));
    }
  };
  check(pair.features_s, cfg_.feature_dim, "features_s");
  check(pair.features_o, cfg_.feature_dim, "features_o");
  check(pair.theta_a_s, 8, "theta_a_s");
  check(pair.theta_a_o, 8, "theta_a_o");
  check(pair.theta_r, 5, "theta_r");
  if (extra_.enabled()) {
    check(pair.extra_s, cfg_.extra_dim, "extra_s");
    check(pair.extra_o, cfg_.extra_dim, "extra_o");
  }

  ag::Var fs(pair.features_s), fo(pair.features_o);
  if (extra_.enabled()) {
    fs = extra_(ctx, fs, ag::Var(pair.extra_s));
    fo = extra_(ctx, fo, ag::Var(pair.extra_o));
  }
  EntityEmbedding es = embed_(ctx, fs, ag::Var(pair.theta_a_s), pair.valid);
  EntityEmbedding eo = embed_(ctx, fo, ag::Var(pair.theta_a_o), pair.valid);
  auto [ss, so] = sos_(ctx, std::move(es), std::move(eo));
  PairEmbedding e_so = fuse_(ctx, ss, so, ag::Var(pair.theta_r));
  FeaturePyramid pyramid = encoder_(ctx, e_so);
  ag::Var z_msk = mask_decoder_(ctx, pyramid);
  std::vector<ag::Var> z_cls = decoder_(ctx, pyramid.levels.back(), pyramid.masks.back());

  ModelOutput out;
  std::tie(out.class_logits, out.mask_logits) = heads_(ctx, z_cls.back(), z_msk);
  if (cfg_.aux_loss) {
    for (std::size_t i = 0; i + 1 < z_cls.size(); ++i) out.aux.push_back(heads_(ctx, z_cls[i], z_msk));
  }
  return out;
}

OutputValues VrdModel::predict(const PairSample& pair) const {
  ag::NoGradGuard guard;
  nn::Graph graph;
  nn::Context ctx{graph, false, nullptr};
  return forward(ctx, pair).values();
}

std::vector<OutputValues> VrdModel::predict_batch(const std::vector<PairSample>& pairs) const {
  std::vector<OutputValues> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(predict(p));
  return out;
}

}  // namespace vrdone
