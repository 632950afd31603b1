#include "orid/corpus.hpp"
#include "orid/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

using namespace orid;

TEST(Normalize, LowercasesAndStripsPunctuation) {
  EXPECT_EQ(normalize_text("Heart size is NORMAL, lungs: clear!"), "heart size is normal lungs clear");
  EXPECT_EQ(normalize_text("  multiple   spaces\tand\nlines "), "multiple spaces and lines");
}

TEST(Normalize, KeepsIntraWordHyphensAndDecimals) {
  EXPECT_EQ(normalize_text("Well-expanded lungs; effusion 1.5 cm."), "well-expanded lungs effusion 1.5 cm");
  EXPECT_EQ(normalize_text("- leading and trailing -"), "leading and trailing");
  EXPECT_EQ(normalize_text("end. 2"), "end 2");
}

TEST(Vocabulary, AllWordsMeetMinCount) {
  const Vocabulary v = build_vocabulary({"lungs are clear", "lungs are clear", "lungs are clear"});
  for (const char* w : {"lungs", "are", "clear"}) EXPECT_TRUE(v.contains(w)) << w;
  EXPECT_GE(v.id("clear"), 4);
  EXPECT_EQ(v.size(), 7);
}

TEST(Vocabulary, RareWordsBecomeUnknown) {
  const Vocabulary v = build_vocabulary({"nodule seen", "no acute disease", "no acute disease"}, 3);
  EXPECT_FALSE(v.contains("nodule"));
  EXPECT_FALSE(v.contains("seen"));
  const TokenSeq t = tokenize("nodule seen", v, 4);
  EXPECT_EQ(t, (TokenSeq{special::kBos, special::kUnk, special::kUnk, special::kEos}));
}

TEST(Vocabulary, MinCountOneKeepsEveryWord) {
  const std::vector<std::string> corpus = {"a b c", "d e", "f"};
  const Vocabulary v = build_vocabulary(corpus, 1);
  for (const auto& text : corpus)
    for (int id : tokenize(text, v, 10)) EXPECT_NE(id, special::kUnk);
}

TEST(Vocabulary, IdsFollowFrequencyThenAlphabet) {
  const Vocabulary v = build_vocabulary({"b a c c", "c b"}, 1);
  EXPECT_EQ(v.id("c"), 4);
  EXPECT_EQ(v.id("b"), 5);
  EXPECT_EQ(v.id("a"), 6);
}

TEST(Vocabulary, EmptyCorpusThrows) {
  EXPECT_THROW(build_vocabulary({}), std::invalid_argument);
}

TEST(Tokenize, EmptyStringIsBosEosPadding) {
  const Vocabulary v = build_vocabulary({"x"}, 1);
  EXPECT_EQ(tokenize("", v, 5), (TokenSeq{special::kBos, special::kEos, special::kPad, special::kPad, special::kPad}));
}

TEST(Tokenize, ExactFitIsNotTruncated) {
  const Vocabulary v = build_vocabulary({"a b c"}, 1);
  const TokenSeq t = tokenize("a b c", v, 5);
  EXPECT_EQ(t, (TokenSeq{special::kBos, v.id("a"), v.id("b"), v.id("c"), special::kEos}));
}

TEST(Tokenize, LongTextIsTruncatedBeforeEos) {
  const Vocabulary v = build_vocabulary({"a b c d e"}, 1);
  const TokenSeq t = tokenize("a b c d e", v, 4);
  EXPECT_EQ(t, (TokenSeq{special::kBos, v.id("a"), v.id("b"), special::kEos}));
  EXPECT_EQ(content_length(t), 4);
}

TEST(Tokenize, DetokenizeRoundTrip) {
  const Vocabulary v = build_vocabulary({"heart is normal"}, 1);
  EXPECT_EQ(detokenize(tokenize("Heart is normal.", v, 10), v), "heart is normal");
}

TEST(Splits, SevenTwoOne) {
  const auto s = assign_splits(10);
  EXPECT_EQ(std::count(s.begin(), s.end(), Split::Train), 7);
  EXPECT_EQ(std::count(s.begin(), s.end(), Split::Val), 2);
  EXPECT_EQ(std::count(s.begin(), s.end(), Split::Test), 1);
  EXPECT_THROW(assign_splits(0), std::invalid_argument);
}

TEST(Manifest, JsonlRoundTrip) {
  DatasetManifest m;
  ManifestRecord r;
  r.id = "case-1";
  r.image_path = "images/case-1.npy";
  r.mask_path = "";
  for (OrganId o : kAllOrgans) r.descriptions[index_of(o)] = std::string(organ_name(o)) + " looks fine";
  r.report = "heart is normal. lungs are clear.";
  r.split = Split::Val;
  m.records = {r, r};
  m.records[1].id = "case-2";
  m.records[1].split = Split::Test;
  const DatasetManifest back = manifest_from_jsonl(manifest_to_jsonl(m));
  EXPECT_EQ(back.records, m.records);
}

TEST(Manifest, MissingDescriptionIsReported) {
  const std::string line =
      R"({"id":"a","image_path":"a.npy","mask_path":"","descriptions":{"lung":"x"},"report":"r","split":"train"})";
  EXPECT_THROW(manifest_from_jsonl(line + "\n"), std::runtime_error);
}

TEST(Synth, SameSeedGivesIdenticalManifest) {
  const auto a = synth_dataset(7, 12);
  const auto b = synth_dataset(7, 12);
  EXPECT_EQ(manifest_to_jsonl(a.manifest), manifest_to_jsonl(b.manifest));
  for (std::size_t i = 0; i < a.cases.size(); ++i) EXPECT_EQ(a.cases[i].image, b.cases[i].image);
  EXPECT_NE(manifest_to_jsonl(a.manifest), manifest_to_jsonl(synth_dataset(8, 12).manifest));
}

TEST(Synth, MasksHaveTheFixedChannelCounts) {
  const MaskBundle m = synth_masks(64);
  EXPECT_NO_THROW(validate_mask_bundle(m));
  for (OrganId o : kAllOrgans) {
    EXPECT_EQ(m[o].channels, mask_channels(o));
    EXPECT_GT(std::count(m[o].data.begin(), m[o].data.end(), 1), 0);
  }
}

TEST(Dataset, WriteAndLoadReproducesCases) {
  const auto ds = synth_dataset(3, 4);
  const auto dir = std::filesystem::temp_directory_path() / "orid_dataset_test";
  std::filesystem::remove_all(dir);
  write_dataset(dir.string(), ds.manifest, ds.cases);
  const auto loaded = load_cases(read_manifest((dir / "manifest.jsonl").string()), dir.string());
  ASSERT_EQ(loaded.size(), ds.cases.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].image, ds.cases[i].image);
    EXPECT_EQ(loaded[i].masks, ds.cases[i].masks);
    EXPECT_EQ(loaded[i].report, ds.cases[i].report);
    EXPECT_EQ(loaded[i].descriptions, ds.cases[i].descriptions);
  }
  std::filesystem::remove_all(dir);
}

TEST(Dataset, MissingMaskPathGivesFlaggedZeros) {
  auto ds = synth_dataset(3, 1);
  ds.manifest.records[0].mask_path = "";
  const auto dir = std::filesystem::temp_directory_path() / "orid_dataset_nomask";
  std::filesystem::remove_all(dir);
  write_dataset(dir.string(), ds.manifest, ds.cases);
  const auto loaded = load_cases(read_manifest((dir / "manifest.jsonl").string()), dir.string());
  EXPECT_TRUE(loaded[0].masks.missing);
  for (OrganId o : kAllOrgans) {
    EXPECT_EQ(loaded[0].masks[o].channels, mask_channels(o));
    EXPECT_EQ(std::count(loaded[0].masks[o].data.begin(), loaded[0].masks[o].data.end(), 1), 0);
  }
  std::filesystem::remove_all(dir);
}

TEST(EncodeCase, DescriptionsHaveFixedLengths) {
  const auto ds = synth_dataset(1, 1);
  std::vector<std::string> texts = {ds.cases[0].report};
  for (const auto& d : ds.cases[0].descriptions) texts.push_back(d);
  const Vocabulary v = build_vocabulary(texts, 1);
  const Sample s = encode_case(ds.cases[0], v, 30);
  for (OrganId o : kAllOrgans) EXPECT_EQ(static_cast<int>(s.descriptions[index_of(o)].size()), desc_length(o));
  EXPECT_EQ(s.report.size(), 30u);
  EXPECT_EQ(s.report.front(), special::kBos);
}
