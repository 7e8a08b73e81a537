#include "support.hpp"
#include "vrdone/detector.hpp"

#include <doctest.h>

using namespace vrdone;
using testing::random_matrix;
using testing::random_pair;
using testing::small_config;

TEST_CASE("pyramid lengths") {
  CHECK(pyramid_lengths(512, 3) == std::vector<Index>{512, 256, 128, 64});
  CHECK(pyramid_lengths(96, 3) == std::vector<Index>{96, 48, 24, 12});
  CHECK(pyramid_lengths(8, 3) == std::vector<Index>{8, 4, 2, 1});
  CHECK(pyramid_lengths(13, 3) == std::vector<Index>{13, 7, 4, 2});
}

TEST_CASE("encoder pyramid matches the length rule and decoder restores full resolution") {
  std::mt19937_64 rng(31);
  ModelConfig cfg = small_config();
  VrdModel model(cfg);
  for (Index len : {8, 13, 96}) {
    const PairSample p = random_pair(cfg, len, len, rng);
    nn::Graph g;
    nn::Context ctx{g};
    auto [s, o] = model.synergy()(ctx, model.embedder()(ctx, ag::Var(p.features_s), ag::Var(p.theta_a_s), p.valid),
                                  model.embedder()(ctx, ag::Var(p.features_o), ag::Var(p.theta_a_o), p.valid));
    const PairEmbedding e = model.pair_fusion()(ctx, s, o, ag::Var(p.theta_r));
    const FeaturePyramid pyr = model.encoder()(ctx, e);
    const auto want = pyramid_lengths(len, 3);
    REQUIRE(pyr.levels.size() == want.size());
    for (std::size_t l = 0; l < want.size(); ++l) {
      CHECK(pyr.levels[l].rows() == want[l]);
      CHECK(static_cast<Index>(pyr.masks[l].size()) == want[l]);
    }
    CHECK(model.mask_decoder()(ctx, pyr).rows() == len);
  }
}

TEST_CASE("mask decoder: zero pyramid, and every level reaches the output") {
  nn::ParameterStore store(3);
  MaskDecoder dec(store, "dec", 4, 3, UpsampleMode::kNearest);
  nn::Graph g;
  nn::Context ctx{g};
  FeaturePyramid zero;
  for (Index len : {8, 4, 2}) {
    zero.levels.emplace_back(Matrix::Zero(len, 4));
    zero.masks.push_back(all_valid(len));
  }
  CHECK(dec(ctx, zero).value().isZero());

  std::mt19937_64 rng(32);
  FeaturePyramid p;
  for (Index len : {8, 4, 2}) {
    p.levels.emplace_back(random_matrix(len, 4, rng), true);
    p.masks.push_back(all_valid(len));
  }
  ag::backward(testing::project(dec(ctx, p)));
  for (const auto& lvl : p.levels) CHECK(lvl.grad().cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("relation decoder is permutation equivariant over queries") {
  std::mt19937_64 rng(33);
  AttentionConfig att;
  att.dim = 8;
  att.heads = 2;
  att.droppath_rate = 0.0;
  nn::ParameterStore store(4);
  RelationDecoder dec(store, "dec", att, 2, 5);
  nn::Graph g;
  nn::Context ctx{g};
  const Matrix q = random_matrix(5, 8, rng), z = random_matrix(6, 8, rng);
  const Mask zv{1, 1, 0, 1, 1, 0};
  const Matrix out = dec.decode(ctx, ag::Var(q), ag::Var(z), zv).back().value();
  CHECK(out.rows() == 5);
  const std::vector<Index> perm{2, 4, 0, 1, 3};
  Matrix qp(5, 8);
  for (Index i = 0; i < 5; ++i) qp.row(i) = q.row(perm[static_cast<std::size_t>(i)]);
  const Matrix outp = dec.decode(ctx, ag::Var(qp), ag::Var(z), zv).back().value();
  for (Index i = 0; i < 5; ++i) CHECK((outp.row(i) - out.row(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() < 1e-12);

  // Fully masked memory: the output depends on the queries only.
  const Mask none(6, 0);
  const Matrix a = dec.decode(ctx, ag::Var(q), ag::Var(z), none).back().value();
  const Matrix b = dec.decode(ctx, ag::Var(q), ag::Var(random_matrix(6, 8, rng)), none).back().value();
  CHECK(a == b);
}

TEST_CASE("prediction heads") {
  std::mt19937_64 rng(34);
  nn::ParameterStore store(5);
  PredictionHeads heads(store, "heads", 16, 50);
  nn::Graph g;
  nn::Context ctx{g};
  const Matrix zc = random_matrix(9, 16, rng);
  auto [cls, msk] = heads(ctx, ag::Var(zc), ag::Var(random_matrix(512, 16, rng)));
  CHECK(cls.rows() == 9);
  CHECK(cls.cols() == 51);
  CHECK(msk.rows() == 9);
  CHECK(msk.cols() == 512);

  auto [cls0, msk0] = heads(ctx, ag::Var(zc), ag::Var(Matrix::Zero(512, 16)));
  CHECK(msk0.value().isZero());

  Matrix dup = zc;
  dup.row(4) = zc.row(1);
  auto [cls2, msk2] = heads(ctx, ag::Var(dup), ag::Var(random_matrix(20, 16, rng)));
  CHECK(cls2.value().row(4) == cls2.value().row(1));
  CHECK(msk2.value().row(4) == msk2.value().row(1));
}

TEST_CASE("model output shapes, determinism and batching") {
  std::mt19937_64 rng(35);
  const ModelConfig cfg = small_config();
  VrdModel model(cfg);
  std::vector<PairSample> pairs;
  for (Index len : {8, 16, 16, 24}) pairs.push_back(random_pair(cfg, len, len - 3, rng));
  const OutputValues a = model.predict(pairs[1]);
  const OutputValues b = model.predict(pairs[1]);
  CHECK(a.class_logits.rows() == cfg.num_queries);
  CHECK(a.class_logits.cols() == cfg.num_predicates + 1);
  CHECK(a.mask_logits.cols() == 16);
  CHECK(a.class_logits == b.class_logits);
  CHECK(a.mask_logits == b.mask_logits);
  const auto batch = model.predict_batch(pairs);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const OutputValues one = model.predict(pairs[i]);
    CHECK((batch[i].class_logits - one.class_logits).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((batch[i].mask_logits - one.mask_logits).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("padded content never reaches valid outputs") {
  std::mt19937_64 rng(36);
  const ModelConfig cfg = small_config();
  VrdModel model(cfg);
  for (int trial = 0; trial < 10; ++trial) {
    const Index valid = 5 + trial;
    PairSample p = random_pair(cfg, 24, valid, rng);
    const OutputValues a = model.predict(p);
    for (Matrix* m : {&p.features_s, &p.features_o, &p.theta_a_s, &p.theta_a_o, &p.theta_r}) {
      m->bottomRows(24 - valid) = random_matrix(24 - valid, m->cols(), rng, 10.0);
    }
    const OutputValues b = model.predict(p);
    CHECK(a.class_logits == b.class_logits);
    CHECK(a.mask_logits.leftCols(valid) == b.mask_logits.leftCols(valid));
  }
}

TEST_CASE("outputs stay finite under random inputs") {
  ModelConfig cfg = small_config();
  cfg.dim = 8;
  cfg.num_queries = 2;
  VrdModel model(cfg);
  bool finite = true;
  for (int seed = 0; seed < 1000; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const Index len = 8 + (seed % 3) * 4;
    const Index valid = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(len));
    PairSample p = random_pair(cfg, len, valid, rng);
    p.features_s *= 1.0 + static_cast<double>(seed % 7) * 5.0;
    const OutputValues o = model.predict(p);
    finite = finite && o.class_logits.allFinite() && o.mask_logits.allFinite();
  }
  CHECK(finite);
}

TEST_CASE("inputs shorter than the encoder stride are rejected") {
  std::mt19937_64 rng(37);
  const ModelConfig cfg = small_config();
  VrdModel model(cfg);
  CHECK_THROWS_WITH_AS(model.predict(random_pair(cfg, 7, 7, rng)), doctest::Contains("pad the pair"),
                       std::invalid_argument);
  PairSample bad = random_pair(cfg, 8, 8, rng);
  bad.theta_r = Matrix::Zero(8, 4);
  CHECK_THROWS_AS(model.predict(bad), std::invalid_argument);
}

TEST_CASE("parameter names follow the stage prefixes") {
  VrdModel model(small_config());
  for (const auto& p : model.params().params()) {
    const std::string& n = p->name;
    const bool known = n.rfind("entity_embed.", 0) == 0 || n.rfind("sos.", 0) == 0 || n.rfind("pair_fusion.", 0) == 0 ||
                       n.rfind("encoder.", 0) == 0 || n.rfind("mask_decoder.", 0) == 0 ||
                       n.rfind("decoder.", 0) == 0 || n.rfind("heads.", 0) == 0;
    CAPTURE(n);
    CHECK(known);
  }
}
