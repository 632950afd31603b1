#include "orid/model.hpp"
#include "orid/synth.hpp"
#include "orid/vision.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace orid;
using namespace orid::testing;

namespace {

VisionConfig toy_vision() { return ModelConfig::toy().vision; }

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

TEST(PoolMatrix, AveragesBlocks) {
  const Matrix p = adaptive_pool_matrix(4, 4, 2);
  Matrix x(1, 16);
  for (int i = 0; i < 16; ++i) x(0, i) = i;
  const Matrix y = x * p;
  EXPECT_DOUBLE_EQ(y(0, 0), (0 + 1 + 4 + 5) / 4.0);
  EXPECT_DOUBLE_EQ(y(0, 3), (10 + 11 + 14 + 15) / 4.0);
}

TEST(RawExtractor, MidGradientMatchesFiniteDifferences) {
  nn::ParamStore store;
  nn::Initializer init(3);
  const VisionConfig cfg = toy_vision();
  const RawImageExtractor ex(store, cfg, init);
  std::mt19937_64 rng(4);
  const Var pixels = ag::parameter(random_matrix(rng, 1, 64).cwiseAbs());
  const auto loss = [&] { return ag::sum(ex(pixels).mid); };
  std::vector<Var> params = {pixels};
  for (const auto& e : store.entries()) params.push_back(e.var);
  EXPECT_LT(gradient_check(loss, params), 1e-4);
}

TEST(RawExtractor, ShapesFiniteAndDeterministic) {
  nn::ParamStore store;
  nn::Initializer init(1);
  const VisionConfig cfg;
  const RawImageExtractor ex(store, cfg, init);
  const auto zero = ex.extract(Image(cfg.image_size, cfg.image_size, 1));
  EXPECT_EQ(zero.mid.rows(), cfg.positions());
  EXPECT_EQ(zero.mid.cols(), cfg.dim);
  EXPECT_TRUE(all_finite(zero.mid.value()));
  EXPECT_TRUE(all_finite(zero.final.value()));
  const Image img = synth_dataset(2, 1).cases[0].image;
  EXPECT_EQ(ex.extract(img).final.value(), ex.extract(img).final.value());
  for (const auto& e : store.entries()) EXPECT_EQ(e.group, nn::ParamGroup::ImageExtractor) << e.name;
}

TEST(RawExtractor, WrongResolutionStatesExpectedShape) {
  nn::ParamStore store;
  nn::Initializer init(1);
  const RawImageExtractor ex(store, VisionConfig{}, init);
  try {
    ex.extract(Image(32, 32, 1));
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("64x64x1"), std::string::npos) << e.what();
  }
}

TEST(MaskExtractor, ZeroBundleIsFinite) {
  nn::ParamStore store;
  nn::Initializer init(2);
  const VisionConfig cfg;
  const MaskExtractor ex(store, cfg, init);
  const auto out = ex.extract(MaskBundle::zeros(cfg.image_size, cfg.image_size));
  for (const Var& v : out) {
    EXPECT_EQ(v.rows(), cfg.positions());
    EXPECT_EQ(v.cols(), cfg.dim);
    EXPECT_TRUE(all_finite(v.value()));
  }
}

TEST(MaskExtractor, WrongChannelCountNamesOrganAndCount) {
  nn::ParamStore store;
  nn::Initializer init(2);
  const VisionConfig cfg;
  const MaskExtractor ex(store, cfg, init);
  MaskBundle b = MaskBundle::zeros(cfg.image_size, cfg.image_size);
  b[OrganId::Pleural] = MaskStack(4, cfg.image_size, cfg.image_size);
  try {
    ex.extract(b);
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("pleural"), std::string::npos) << msg;
    EXPECT_NE(msg.find("10"), std::string::npos) << msg;
  }
}

TEST(MaskExtractor, OrganAdaptersAreSeparate) {
  nn::ParamStore store;
  nn::Initializer init(2);
  const MaskExtractor ex(store, toy_vision(), init);
  int adapters = 0;
  for (const auto& e : store.entries()) adapters += e.name.find("adapter") != std::string::npos;
  EXPECT_GE(adapters, 5);
}

TEST(OrganFeatures, OnesAndZeros) {
  std::mt19937_64 rng(5);
  const Var raw = ag::constant(random_matrix(rng, 4, 3));
  OrganArray<Var> ones, zeros;
  ones.fill(ag::constant(Matrix::Ones(4, 3)));
  zeros.fill(ag::constant(Matrix::Zero(4, 3)));
  for (const Var& v : organ_image_features(ones, raw)) EXPECT_EQ(v.value(), raw.value());
  for (const Var& v : organ_image_features(zeros, raw)) EXPECT_EQ(v.value(), Matrix::Zero(4, 3));
}

TEST(OrganFeatures, MatchesScalarLoop) {
  std::mt19937_64 rng(6);
  const Matrix raw = random_matrix(rng, 3, 2);
  OrganArray<Var> masks;
  for (auto& m : masks) m = ag::constant(random_matrix(rng, 3, 2));
  const auto out = organ_image_features(masks, ag::constant(raw));
  for (std::size_t o = 0; o < kNumOrgans; ++o)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) EXPECT_EQ(out[o].value()(i, j), masks[o].value()(i, j) * raw(i, j));
}

TEST(OrganFeatures, ShapeMismatchThrows) {
  OrganArray<Var> masks;
  masks.fill(ag::constant(Matrix::Ones(4, 3)));
  EXPECT_THROW(organ_image_features(masks, ag::constant(Matrix::Ones(3, 3))), std::invalid_argument);
}
