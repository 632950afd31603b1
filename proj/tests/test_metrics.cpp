#include "orid/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <nlohmann/json.hpp>

using namespace orid::metrics;

namespace {

Tokens toks(const std::string& s) {
  Tokens out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto end = s.find(' ', pos);
    out.push_back(s.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return out;
}

LabelVector with_present(std::initializer_list<Observation> obs) {
  LabelVector v;
  for (Observation o : obs) v[o] = Label::Present;
  return v;
}

}  // namespace

TEST(Bleu, PerfectMatch) {
  const std::vector<Tokens> c = {toks("the heart is normal in size")};
  for (double b : bleu_all(c, c)) EXPECT_DOUBLE_EQ(b, 1.0);
}

TEST(Bleu, NoOverlapHitsEpsilonFloor) {
  // Clipped unigram count 0 of 3 is floored to epsilon / 3.
  const double b1 = bleu({toks("a b c")}, {toks("x y z")}, 1);
  EXPECT_NEAR(b1, kBleuEpsilon / 3.0, 1e-15);
}

TEST(Bleu, ShortCandidateHandCounts) {
  // 3/3 unigrams, 2/2 bigrams, 1/1 trigram, no 4-gram; c = 3, r = 4.
  const std::vector<Tokens> c = {toks("the cat sat")}, r = {toks("the cat sat down")};
  const double bp = std::exp(1.0 - 4.0 / 3.0);
  const auto b = bleu_all(c, r);
  EXPECT_NEAR(b[0], bp, 1e-12);
  EXPECT_NEAR(b[1], bp, 1e-12);
  EXPECT_NEAR(b[2], bp, 1e-12);
  EXPECT_NEAR(b[3], bp * std::pow(kBleuEpsilon, 0.25), 1e-12);
}

TEST(Bleu, ClippedCountsAndCorpusPooling) {
  // Candidate 1: "the the the" vs "the cat": unigram clip 1/3.
  // Candidate 2: "a cat" vs "a cat": 2/2 unigrams, 1/1 bigram.
  const std::vector<Tokens> c = {toks("the the the"), toks("a cat")}, r = {toks("the cat"), toks("a cat")};
  const auto b = bleu_all(c, r);
  EXPECT_NEAR(b[0], 3.0 / 5.0, 1e-12);                  // c = 5 > r = 4, no penalty
  EXPECT_NEAR(b[1], std::sqrt(3.0 / 5.0 * 1.0 / 3.0), 1e-12);  // bigrams: (the the) x2 unmatched, (a cat) matched
}

TEST(Bleu, PermutationInvariant) {
  const std::vector<Tokens> c = {toks("a b c d"), toks("e f g"), toks("a a b")};
  const std::vector<Tokens> r = {toks("a b c"), toks("e f g h"), toks("a b b")};
  const std::vector<Tokens> c2 = {c[2], c[0], c[1]}, r2 = {r[2], r[0], r[1]};
  EXPECT_EQ(bleu_all(c, r), bleu_all(c2, r2));
  EXPECT_THROW(bleu_all({}, {}), std::invalid_argument);
}

TEST(Rouge, Cases) {
  EXPECT_DOUBLE_EQ(rouge_l(toks("a b c"), toks("a b c")), 1.0);
  EXPECT_DOUBLE_EQ(rouge_l(toks("a b"), toks("c d")), 0.0);
  EXPECT_DOUBLE_EQ(rouge_l({}, toks("c d")), 0.0);
  EXPECT_EQ(lcs_length(toks("a b c d"), toks("a c b d")), 3u);
  const double p = 0.75, r = 0.75, b2 = 1.44;
  EXPECT_NEAR(rouge_l(toks("a b c d"), toks("a c b d")), (1 + b2) * p * r / (r + b2 * p), 1e-12);
  // Unequal lengths: LCS 2, P = 2/2, R = 2/4.
  EXPECT_NEAR(rouge_l(toks("a c"), toks("a b c d")), (1 + b2) * 1.0 * 0.5 / (0.5 + b2 * 1.0), 1e-12);
}

TEST(Meteor, IdenticalStrings) {
  EXPECT_NEAR(meteor(toks("a b"), toks("a b")), 0.9375, 1e-12);
  for (int m = 1; m <= 6; ++m) {
    Tokens t;
    for (int i = 0; i < m; ++i) t.push_back("w" + std::to_string(i));
    EXPECT_NEAR(meteor(t, t), 1.0 - 0.5 / (m * m * m), 1e-12);
  }
  EXPECT_EQ(meteor(toks("a b"), toks("c d")), 0.0);
}

TEST(Meteor, StemMatchesAndChunks) {
  // the/cats~cat/sat/on align in one chunk, mat jumps over "the": m = 5, 2 chunks.
  const double p = 1.0, r = 5.0 / 6.0;
  const double f = 10 * p * r / (r + 9 * p);
  const double expected = f * (1 - 0.5 * std::pow(2.0 / 5.0, 3));
  EXPECT_NEAR(meteor(toks("the cats sat on mat"), toks("the cat sat on the mat")), expected, 1e-12);
}

TEST(Meteor, Stemmer) {
  EXPECT_EQ(stem("opacities"), "opacity");
  EXPECT_EQ(stem("effusions"), "effusion");
  EXPECT_EQ(stem("glass"), "glass");
  EXPECT_EQ(stem("boxes"), "box");
  EXPECT_EQ(stem("showing"), "show");
  EXPECT_EQ(stem("enlarged"), "enlarg");
}

TEST(Labeler, PresentAndAbsent) {
  EXPECT_EQ(ce_labels("There is a small pleural effusion.")[Observation::PleuralEffusion], Label::Present);
  EXPECT_EQ(ce_labels("No pleural effusion.")[Observation::PleuralEffusion], Label::Absent);
  EXPECT_EQ(ce_labels("Lungs are clear.")[Observation::NoFinding], Label::Present);
  EXPECT_EQ(ce_labels("No pneumothorax.")[Observation::NoFinding], Label::Present);
}

TEST(Labeler, TwentySentenceGold) {
  const std::string report =
      "The heart is enlarged. No pleural effusion. There is a small left pleural effusion. Lungs are clear. "
      "No pneumothorax. Patchy opacity in the right lower lobe. Without focal consolidation. Mild pulmonary edema. "
      "A 1.5 cm nodule is seen. Free of fracture. Pacemaker leads are in place. No pneumonia. "
      "Bony structures are intact. Mediastinal contour is widened. There is no atelectasis. "
      "Pleural thickening at the apex. Degenerative changes of the spine. Resolved pneumothorax on the right. "
      "No new consolidation. Stable cardiomegaly.";
  LabelVector gold;
  gold[Observation::Atelectasis] = Label::Absent;
  gold[Observation::Cardiomegaly] = Label::Present;
  gold[Observation::Consolidation] = Label::Absent;
  gold[Observation::Edema] = Label::Present;
  gold[Observation::EnlargedCardiomediastinum] = Label::Present;
  gold[Observation::Fracture] = Label::Absent;
  gold[Observation::LungLesion] = Label::Present;
  gold[Observation::LungOpacity] = Label::Present;
  gold[Observation::NoFinding] = Label::Unmentioned;
  gold[Observation::PleuralEffusion] = Label::Present;
  gold[Observation::PleuralOther] = Label::Present;
  gold[Observation::Pneumonia] = Label::Absent;
  gold[Observation::Pneumothorax] = Label::Absent;
  gold[Observation::SupportDevices] = Label::Present;
  const LabelVector got = ce_labels(report);
  for (int k = 0; k < kNumObservations; ++k)
    EXPECT_EQ(got.labels[k], gold.labels[k]) << observation_name(static_cast<Observation>(k));
}

TEST(CePrf, Cases) {
  const std::vector<LabelVector> same = {with_present({Observation::Edema}), with_present({Observation::Fracture})};
  const PRF id = ce_prf(same, same);
  EXPECT_EQ(id.precision, 1.0);
  EXPECT_EQ(id.recall, 1.0);
  EXPECT_EQ(id.f1, 1.0);
  const PRF none = ce_prf({LabelVector{}}, {with_present({Observation::Edema})});
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.f1, 0.0);
  // 3 TP, 1 FP, 2 FN spread over two samples.
  const std::vector<LabelVector> pred = {
      with_present({Observation::Edema, Observation::Fracture, Observation::Pneumonia}),
      with_present({Observation::Atelectasis})};
  const std::vector<LabelVector> ref = {
      with_present({Observation::Edema, Observation::Fracture, Observation::Pneumothorax}),
      with_present({Observation::Pneumonia, Observation::Atelectasis})};
  const PRF p = ce_prf(pred, ref);
  EXPECT_NEAR(p.precision, 0.75, 1e-12);
  EXPECT_NEAR(p.recall, 0.6, 1e-12);
  EXPECT_NEAR(p.f1, 2 * 0.45 / 1.35, 1e-12);
  EXPECT_THROW(ce_prf(pred, {ref[0]}), std::invalid_argument);
}

TEST(Table, ScoreCorpusAndSerialization) {
  const MetricTable t = score_corpus({"The heart is normal.", "There is no pleural effusion."},
                                    {"the heart is normal", "there is no pleural effusion"});
  for (double b : t.bleu) EXPECT_DOUBLE_EQ(b, 1.0);
  EXPECT_DOUBLE_EQ(t.rouge_l, 1.0);
  EXPECT_EQ(t.ce.f1, 1.0);  // "no finding" on both sides
  const auto j = nlohmann::json::parse(t.to_json());
  EXPECT_DOUBLE_EQ(j.at("nlg").at("BLEU@4").get<double>(), 1.0);
  EXPECT_NE(t.to_text().find("ROUGE-L"), std::string::npos);
}
