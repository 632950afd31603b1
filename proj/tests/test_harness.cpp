#include "orid/array_io.hpp"
#include "orid/checkpoint.hpp"
#include "orid/harness.hpp"
#include "orid/synth.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>

using namespace orid;
namespace fs = std::filesystem;

namespace {

RunConfig toy_run() {
  RunConfig cfg;
  cfg.preset = "toy";
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.augment = false;
  cfg.min_count = 1;
  cfg.report_len = 12;
  cfg.beam_width = 2;
  return cfg;
}

PreparedData toy_data(int n = 10, std::uint64_t seed = 1) {
  SynthGrammar g = default_synth_grammar();
  g.image_size = 8;
  const auto ds = synth_dataset(seed, n, g);
  return prepare_data(ds.cases, default_ds_graph(), 1, 12);
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(RunConfig, Validation) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lr_image = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.toggles = {true, false, true, false};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(RunConfig, DeterministicEnvironmentVariable) {
  ::setenv("ORID_DETERMINISTIC", "1", 1);
  EXPECT_TRUE(deterministic_from_env());
  ::setenv("ORID_DETERMINISTIC", "0", 1);
  EXPECT_FALSE(deterministic_from_env());
  ::unsetenv("ORID_DETERMINISTIC");
  EXPECT_FALSE(deterministic_from_env());
}

TEST(Data, VocabularyFromTrainingTextOnly) {
  const PreparedData d = toy_data();
  EXPECT_FALSE(d.train.empty());
  EXPECT_FALSE(d.val.empty());
  EXPECT_EQ(d.train.size() + d.val.size() + d.test.size(), 10u);
  for (const auto& s : d.train)
    for (int id : s.report) EXPECT_NE(id, special::kUnk);
}

TEST(Optimizer, GroupLearningRates) {
  const PreparedData d = toy_data();
  OridModel m(toy_run().model_config(d.vocab.size()), Toggles{}, d.adjacency, 1);
  const Adam opt(m.params(), 1e-4, 5e-4);
  EXPECT_EQ(opt.learning_rate_of("vision.raw.conv0.weight"), 1e-4);
  EXPECT_EQ(opt.learning_rate_of("vision.mask.proj.weight"), 1e-4);
  EXPECT_EQ(opt.learning_rate_of("ocf.fine.w_q"), 5e-4);
  EXPECT_EQ(opt.learning_rate_of("oica.mlp.out.weight"), 5e-4);
  EXPECT_EQ(opt.learning_rate_of("gen.out.weight"), 5e-4);
  for (const auto& e : m.params().entries())
    EXPECT_EQ(e.group == nn::ParamGroup::ImageExtractor, e.name.rfind("vision.", 0) == 0) << e.name;
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  nn::ParamStore store;
  const Var a = store.add("vision.a", Matrix::Constant(1, 2, 1.0), nn::ParamGroup::ImageExtractor);
  const Var b = store.add("b", Matrix::Constant(1, 1, 1.0), nn::ParamGroup::Other);
  a.node()->grad = (Matrix(1, 2) << 3.0, -0.5).finished();
  b.node()->grad = Matrix::Constant(1, 1, 2.0);
  Adam opt(store, 0.1, 0.01);
  opt.step();
  EXPECT_NEAR(a.value()(0, 0), 0.9, 1e-7);
  EXPECT_NEAR(a.value()(0, 1), 1.1, 1e-7);
  EXPECT_NEAR(b.value()(0, 0), 0.99, 1e-7);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Optimizer, ClipGlobalNorm) {
  nn::ParamStore store;
  const Var a = store.add("a", Matrix::Zero(1, 2), nn::ParamGroup::Other);
  const Var b = store.add("b", Matrix::Zero(1, 1), nn::ParamGroup::Other);
  a.node()->grad = (Matrix(1, 2) << 3.0, 4.0).finished();
  b.node()->grad = Matrix::Constant(1, 1, 12.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(store, 6.5), 13.0);
  EXPECT_NEAR(a.grad()(0, 1), 2.0, 1e-12);
  EXPECT_NEAR(b.grad()(0, 0), 6.0, 1e-12);
  EXPECT_NEAR(clip_grad_norm(store, 100.0), 6.5, 1e-12);
}

TEST(Augment, ImageAndMasksMoveTogether) {
  Sample s;
  s.image = Image(8, 8, 1);
  s.masks = MaskBundle::zeros(8, 8);
  s.image.at(2, 3, 0) = 1.0f;
  s.masks[OrganId::Heart].at(0, 2, 3) = 1;
  std::mt19937_64 rng(3);
  for (int t = 0; t < 30; ++t) {
    const Sample a = augment_sample(s, rng, 2, 0.5);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) EXPECT_EQ(a.image.at(y, x, 0) == 1.0f, a.masks[OrganId::Heart].at(0, y, x) == 1);
  }
  std::mt19937_64 r0(1);
  EXPECT_EQ(augment_sample(s, r0, 0, 0.0).image, s.image);
}

TEST(Train, SameSeedSameCurves) {
  const PreparedData d = toy_data();
  RunConfig cfg = toy_run();
  cfg.augment = true;
  cfg.crop_pad = 1;
  const TrainResult a = train(cfg, d);
  const TrainResult b = train(cfg, d);
  ASSERT_EQ(a.log.size(), 2u);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_loss, b.log[i].val_loss);
  }
  EXPECT_EQ(a.best_checkpoint, b.best_checkpoint);
}

TEST(Train, CallbackCanStopEarly) {
  const PreparedData d = toy_data();
  RunConfig cfg = toy_run();
  cfg.epochs = 5;
  int calls = 0;
  const TrainResult r = train(cfg, d, [&](const EpochLog& log, const OridModel&) {
    ++calls;
    return log.epoch >= 2;
  });
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(r.log.size(), 2u);
}

TEST(Train, NonFiniteLossAbortsWithSnapshot) {
  const PreparedData d = toy_data();
  RunConfig cfg = toy_run();
  cfg.lr_other = 1e300;
  cfg.lr_image = 1e300;
  cfg.clip_norm = 0;
  cfg.epochs = 3;
  cfg.out_dir = temp_dir("orid_nonfinite").string();
  try {
    train(cfg, d);
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite loss"), std::string::npos) << e.what();
  }
  EXPECT_TRUE(fs::exists(fs::path(cfg.out_dir) / "nonfinite.ckpt"));
  fs::remove_all(cfg.out_dir);
}

TEST(Evaluate, CheckpointRoundTripGivesIdenticalTranscript) {
  const PreparedData d = toy_data();
  RunConfig cfg = toy_run();
  cfg.out_dir = temp_dir("orid_eval").string();
  const TrainResult r = train(cfg, d);
  ASSERT_TRUE(fs::exists(fs::path(cfg.out_dir) / "best.ckpt"));
  ASSERT_TRUE(fs::exists(fs::path(cfg.out_dir) / "last.ckpt"));
  const EvalTranscript before = evaluate(*r.model, d.vocab, d.val, 2, "val");
  const LoadedCheckpoint ck = load_checkpoint((fs::path(cfg.out_dir) / "last.ckpt").string());
  const EvalTranscript after = evaluate(*ck.model, ck.vocab, d.val, 2, "val");
  EXPECT_EQ(before.to_json(), after.to_json());
  ASSERT_EQ(after.rows.size(), d.val.size());
  const auto j = nlohmann::json::parse(after.to_json());
  for (const auto& row : j.at("samples")) {
    ASSERT_EQ(row.at("alpha").size(), 5u);
    for (const auto& [organ, v] : row.at("alpha").items()) {
      EXPECT_GT(v.get<double>(), 0.0) << organ;
      EXPECT_LT(v.get<double>(), 1.0) << organ;
    }
  }
  fs::remove_all(cfg.out_dir);
}

TEST(Evaluate, NoAlphaWithoutImportance) {
  const PreparedData d = toy_data();
  RunConfig cfg = toy_run();
  cfg.epochs = 1;
  cfg.toggles = Toggles::ablation_row(3);
  const TrainResult r = train(cfg, d);
  const auto j = nlohmann::json::parse(evaluate(*r.model, d.vocab, d.val, 2, "val").to_json());
  for (const auto& row : j.at("samples")) EXPECT_FALSE(row.contains("alpha"));
}

TEST(Evaluate, VocabularyMismatchIsAnError) {
  SynthGrammar g = default_synth_grammar();
  g.image_size = 8;
  const auto ds = synth_dataset(1, 10, g);
  const fs::path dir = temp_dir("orid_vocab_mismatch");
  write_dataset(dir.string(), ds.manifest, ds.cases);
  RunConfig cfg = toy_run();
  cfg.data_dir = dir.string();
  cfg.epochs = 1;
  const PreparedData d = load_data(cfg);
  const TrainResult r = train(cfg, d);
  io::write_file((dir / "model.ckpt").string(), r.best_checkpoint);
  EXPECT_NO_THROW(evaluate_checkpoint((dir / "model.ckpt").string(), cfg, Split::Val));
  cfg.min_count = 3;
  try {
    evaluate_checkpoint((dir / "model.ckpt").string(), cfg, Split::Val);
    FAIL() << "expected a throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("vocabulary mismatch"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Ablate, FiveRowsRunEndToEnd) {
  const PreparedData d = toy_data(8);
  RunConfig cfg = toy_run();
  cfg.epochs = 1;
  const auto rows = ablate(cfg, d, Split::Val);
  ASSERT_EQ(rows.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(rows[i].row, i + 1);
    EXPECT_EQ(rows[i].toggles, Toggles::ablation_row(i + 1));
    EXPECT_EQ(rows[i].transcript.rows.size(), d.val.size());
  }
  const std::string table = ablation_table(rows);
  EXPECT_NE(table.find("BLEU@4"), std::string::npos);
}
