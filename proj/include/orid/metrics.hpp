#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace orid::metrics {

using Tokens = std::vector<std::string>;

// Corpus BLEU up to order max_n (1..4) with one reference per candidate.
// Zero clipped counts are floored at kBleuEpsilon.
inline constexpr double kBleuEpsilon = 1e-9;
double bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, int max_n);

// Per-order BLEU scores BLEU@1..BLEU@4 from a single pass over the corpus.
std::array<double, 4> bleu_all(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references);

std::size_t lcs_length(const Tokens& a, const Tokens& b);

// LCS-based F-measure with recall weighted by beta = 1.2.
inline constexpr double kRougeBeta = 1.2;
double rouge_l(const Tokens& candidate, const Tokens& reference);

// Exact-then-stem unigram alignment, F_mean = 10PR/(R+9P), fragmentation
// penalty 0.5*(chunks/matches)^3. No synonym stage.
double meteor(const Tokens& candidate, const Tokens& reference);
std::string stem(const std::string& word);

// ---- clinical efficacy ----

inline constexpr int kNumObservations = 14;
enum class Observation : int {
  Atelectasis,
  Cardiomegaly,
  Consolidation,
  Edema,
  EnlargedCardiomediastinum,
  Fracture,
  LungLesion,
  LungOpacity,
  NoFinding,
  PleuralEffusion,
  PleuralOther,
  Pneumonia,
  Pneumothorax,
  SupportDevices,
};
const char* observation_name(Observation o);

enum class Label { Unmentioned, Present, Absent };

struct LabelVector {
  std::array<Label, kNumObservations> labels{};
  Label operator[](Observation o) const { return labels[static_cast<std::size_t>(o)]; }
  Label& operator[](Observation o) { return labels[static_cast<std::size_t>(o)]; }
  bool operator==(const LabelVector&) const = default;
};

// Swappable report labeler.
class Labeler {
 public:
  virtual ~Labeler() = default;
  virtual LabelVector label(std::string_view report) const = 0;
};

// Keyword labeler: a keyword makes its observation present unless a negation
// cue precedes it in the same sentence, in which case it is absent. "No
// finding" is present exactly when no other observation is present.
class KeywordLabeler final : public Labeler {
 public:
  KeywordLabeler();
  LabelVector label(std::string_view report) const override;
  const std::vector<std::string>& keywords(Observation o) const {
    return keywords_[static_cast<std::size_t>(o)];
  }

 private:
  std::array<std::vector<std::string>, kNumObservations> keywords_;
};

LabelVector ce_labels(std::string_view report);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Micro-averaged over all observations, "present" is the positive class.
PRF ce_prf(const std::vector<LabelVector>& predicted, const std::vector<LabelVector>& reference);

// Corpus-level table: BLEU@1-4, METEOR, ROUGE-L and CE precision/recall/F1.
struct MetricTable {
  std::array<double, 4> bleu{};
  double meteor = 0.0;
  double rouge_l = 0.0;
  PRF ce;

  // (column, value) in the column order BLEU@1..4, METEOR, ROUGE-L.
  std::vector<std::pair<std::string, double>> nlg_columns() const;
  std::vector<std::pair<std::string, double>> ce_columns() const;
  std::string to_text() const;
  std::string to_json() const;
};

// Texts are normalized and split into words before scoring.
MetricTable score_corpus(const std::vector<std::string>& predictions, const std::vector<std::string>& references);

}  // namespace orid::metrics
