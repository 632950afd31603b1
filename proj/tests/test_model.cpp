#include "orid/checkpoint.hpp"
#include "orid/model.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace orid;
using namespace orid::testing;

namespace {

ModelConfig toy_config() {
  ModelConfig c = ModelConfig::toy();
  c.vocab_size = 11;
  return c;
}

AdjacencyMatrix adjacency() { return build_adjacency(default_ds_graph()); }

bool has_param_with_prefix(const OridModel& m, const std::string& prefix) {
  for (const auto& e : m.params().entries())
    if (e.name.rfind(prefix, 0) == 0) return true;
  return false;
}

}  // namespace

TEST(Toggles, DependencyRulesAreCited) {
  Toggles t{true, false, true, false};
  try {
    t.validate();
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("use_ocf_coarse => use_ocf_fine"), std::string::npos);
  }
  t = {true, true, false, true};
  try {
    t.validate();
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("use_oica => use_ocf_coarse"), std::string::npos);
  }
}

TEST(Toggles, AblationRows) {
  EXPECT_EQ(Toggles::ablation_row(1), (Toggles{false, false, false, false}));
  EXPECT_EQ(Toggles::ablation_row(3), (Toggles{true, true, false, false}));
  EXPECT_EQ(Toggles::ablation_row(5), (Toggles{true, true, true, true}));
  for (int r = 1; r <= 5; ++r) EXPECT_NO_THROW(Toggles::ablation_row(r).validate());
  EXPECT_THROW(Toggles::ablation_row(6), std::invalid_argument);
}

TEST(ModelConfig, JsonRoundTripAndPresets) {
  for (const char* p : {"toy", "desk", "full"}) {
    ModelConfig c = ModelConfig::preset_named(p);
    c.vocab_size = 40;
    EXPECT_NO_THROW(c.validate()) << p;
    EXPECT_EQ(ModelConfig::from_json(c.to_json()), c);
  }
  EXPECT_EQ(ModelConfig::full().dim(), 512);
  EXPECT_EQ(ModelConfig::full().positions(), 49);
  EXPECT_THROW(ModelConfig::preset_named("huge"), std::invalid_argument);
}

TEST(Model, DisabledModulesHaveNoParameters) {
  const OridModel bl(toy_config(), Toggles::ablation_row(1), adjacency(), 1);
  EXPECT_FALSE(has_param_with_prefix(bl, "vision.mask"));
  EXPECT_FALSE(has_param_with_prefix(bl, "ocf."));
  EXPECT_FALSE(has_param_with_prefix(bl, "oica."));
  const OridModel full(toy_config(), Toggles::ablation_row(5), adjacency(), 1);
  EXPECT_TRUE(has_param_with_prefix(full, "vision.mask"));
  EXPECT_TRUE(has_param_with_prefix(full, "ocf.coarse"));
  EXPECT_TRUE(has_param_with_prefix(full, "oica."));
}

TEST(Model, BypassesAreExactIdentities) {
  std::mt19937_64 rng(2);
  const Sample s = toy_sample(rng, 11, {5, 6});
  for (int row = 1; row <= 5; ++row) {
    const Toggles t = Toggles::ablation_row(row);
    const OridModel m(toy_config(), t, adjacency(), 3);
    const ForwardTrace tr = m.forward(s);
    for (std::size_t o = 0; o < kNumOrgans; ++o) {
      if (!t.use_mask) {
        EXPECT_EQ(tr.organ_features[o].value(), tr.raw.mid.value()) << row;
      }
      if (!t.use_ocf_fine) {
        EXPECT_EQ(tr.cross.fine[o].value(), tr.organ_features[o].value()) << row;
      }
    }
    EXPECT_EQ(tr.cross.coarse.defined(), t.use_ocf_coarse);
    EXPECT_EQ(tr.alpha.defined(), t.use_oica);
    if (!t.use_oica) {
      // alpha == 1 closed form, accumulated from the coarse grid in canonical order.
      Matrix expected = t.use_ocf_coarse ? tr.cross.coarse.value() : tr.cross.fine[0].value();
      for (std::size_t o = t.use_ocf_coarse ? 0 : 1; o < kNumOrgans; ++o) expected += tr.cross.fine[o].value();
      EXPECT_EQ(tr.final.fused.value(), expected) << row;
    }
    EXPECT_EQ(tr.final.input.value(), tr.final.fused.value() + tr.raw.final.value());
  }
}

TEST(Model, AlphaHookZeroLeavesCoarse) {
  std::mt19937_64 rng(3);
  const Sample s = toy_sample(rng, 11, {7});
  OridModel m(toy_config(), Toggles{}, adjacency(), 4);
  m.alpha_override = Alpha{0, 0, 0, 0, 0};
  const ForwardTrace tr = m.forward(s);
  EXPECT_EQ(tr.final.fused.value(), tr.cross.coarse.value());
  EXPECT_EQ(tr.final.input.value(), tr.cross.coarse.value() + tr.raw.final.value());
}

TEST(Model, GenerateReportsAlphaOnlyWithImportance) {
  std::mt19937_64 rng(4);
  const Sample s = toy_sample(rng, 11, {7});
  std::optional<Alpha> a;
  OridModel with(toy_config(), Toggles{}, adjacency(), 5);
  with.generate(s, 2, &a);
  ASSERT_TRUE(a.has_value());
  for (double v : *a) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  OridModel without(toy_config(), Toggles::ablation_row(4), adjacency(), 5);
  without.generate(s, 2, &a);
  EXPECT_FALSE(a.has_value());
}

TEST(Model, WholeModelGradients) {
  std::mt19937_64 rng(5);
  const std::vector<Sample> samples = {toy_sample(rng, 11, {5, 6, 7}), toy_sample(rng, 11, {8, 9})};
  OridModel m(toy_config(), Toggles{}, adjacency(), 6);
  // Keep the check small: one tensor per module.
  std::vector<Var> params;
  for (const char* name : {"vision.raw.mid_proj.weight", "vision.mask.proj.weight", "ocf.fine.w_q", "ocf.coarse.w_v",
                           "oica.gat0.head0.att_src", "oica.mlp.hidden.weight", "gen.dec0.cross_attn.w_k",
                           "gen.embedding.table"}) {
    const auto* e = m.params().find(name);
    ASSERT_NE(e, nullptr) << name;
    params.push_back(e->var);
  }
  const auto loss = [&] {
    Var total = m.loss(samples[0], 0.1).total;
    return ag::add(total, m.loss(samples[1], 0.1).total);
  };
  EXPECT_LT(gradient_check(loss, params), 1e-4);
}

TEST(Model, ImageSizeIsChecked) {
  std::mt19937_64 rng(6);
  Sample s = toy_sample(rng, 11, {5});
  s.image = Image(16, 16, 1);
  const OridModel m(toy_config(), Toggles{}, adjacency(), 1);
  EXPECT_THROW(m.forward(s), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsExact) {
  std::mt19937_64 rng(7);
  const Sample s = toy_sample(rng, 11, {5, 9});
  const OridModel m(toy_config(), Toggles{}, adjacency(), 8);
  const Vocabulary v = small_vocab(7);
  const std::string bytes = encode_checkpoint(m, v, R"({"epoch":3})");
  const LoadedCheckpoint ck = decode_checkpoint(bytes);
  EXPECT_EQ(ck.vocab, v);
  EXPECT_EQ(ck.hash, config_hash(m.config(), m.toggles()));
  EXPECT_EQ(ck.model->config(), m.config());
  EXPECT_EQ(ck.model->toggles(), m.toggles());
  EXPECT_EQ(ck.model->adjacency(), m.adjacency());
  EXPECT_NE(ck.extra.find("epoch"), std::string::npos);
  EXPECT_EQ(ck.model->forward(s).encoded.states.value(), m.forward(s).encoded.states.value());
  EXPECT_EQ(ck.model->generate(s, 3).tokens, m.generate(s, 3).tokens);
  EXPECT_EQ(encode_checkpoint(*ck.model, ck.vocab, R"({"epoch":3})"), bytes);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const OridModel m(toy_config(), Toggles::ablation_row(2), adjacency(), 8);
  const std::string bytes = encode_checkpoint(m, small_vocab(7));
  EXPECT_THROW(decode_checkpoint("NOTACKPT" + bytes.substr(8)), std::runtime_error);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), std::runtime_error);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), std::runtime_error);
}

TEST(Checkpoint, HashDependsOnConfigAndToggles) {
  const ModelConfig c = toy_config();
  EXPECT_EQ(config_hash(c, Toggles{}), config_hash(c, Toggles{}));
  EXPECT_NE(config_hash(c, Toggles{}), config_hash(c, Toggles::ablation_row(4)));
  ModelConfig c2 = c;
  c2.ffn = 32;
  EXPECT_NE(config_hash(c, Toggles{}), config_hash(c2, Toggles{}));
}
