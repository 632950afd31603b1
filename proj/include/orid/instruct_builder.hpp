#pragma once

#include "orid/ds_graph.hpp"
#include "orid/organ.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace orid {

// Answers must stay strictly below this many tokens.
inline constexpr int kMaxAnswerTokens = 20;

struct QAPair {
  std::string image_id;
  OrganId organ = OrganId::Lung;
  std::string prompt;
  std::string answer;
  bool operator==(const QAPair&) const = default;
};

// "What have you found in <organ>?\n<image>"
std::string instruction_prompt(OrganId organ);

struct BuilderConfig {
  double positive_boost = 2.0;      // normal-only pairs survive with probability 1/boost
  int max_duplicate_answers = 3;    // cap on verbatim repeats of one answer
  int min_pairs_per_image = 0;      // images with fewer organ groups are skipped
  double balance_tolerance = 0.1;   // allowed relative deviation from the mean organ count
  void validate() const;
};

struct ReportRecord {
  std::string image_id;
  std::string report;
};

struct BuildStats {
  OrganArray<int> organ_counts{};
  double mean_answer_tokens = 0.0;
  int positive_pairs = 0;
  int normal_pairs = 0;
  double positive_ratio = 0.0;
  // Bookkeeping of the construction pass (left zero by build_stats).
  int candidate_pairs = 0;
  int dropped_normal = 0;
  int dropped_duplicate = 0;
  int skipped_images = 0;
  int truncated_answers = 0;
  OrganArray<int> balance_trimmed{};
  int trimmed_positive = 0;
  std::vector<std::string> warnings;
  BuilderConfig config;

  std::string to_json() const;
};

// Splits on sentence-final periods (a period between two digits is a decimal
// point) and normalizes each sentence; empty sentences are dropped.
std::vector<std::string> segment_report(std::string_view report);

// True when a DS-Graph keyword occurs in the sentence without a preceding
// negation cue.
bool is_positive_sentence(std::string_view normalized_sentence, const DSGraph& g);
bool is_positive_answer(std::string_view answer, const DSGraph& g);

int answer_token_count(std::string_view answer);

struct BuildResult {
  std::vector<QAPair> pairs;
  BuildStats stats;
};

BuildResult build_qa_pairs(const std::vector<ReportRecord>& corpus, const DSGraph& g, const BuilderConfig& cfg,
                           std::uint64_t seed);

BuildStats build_stats(const std::vector<QAPair>& pairs, const DSGraph& g);

// One JSON object per line: image_id, organ, prompt, answer.
std::string qa_pairs_to_jsonl(const std::vector<QAPair>& pairs);

}  // namespace orid
