#include "orid/instruct_builder.hpp"

#include "orid/corpus.hpp"
#include "orid/negation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace orid {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Independent stream per (seed, key) so decisions do not depend on visit order.
std::mt19937_64 stream(std::uint64_t seed, std::string_view key) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fnv1a(key)), static_cast<std::uint32_t>(fnv1a(key) >> 32)};
  return std::mt19937_64(seq);
}

std::string join_answer(const std::vector<std::string>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out += " ";
    out += s + ".";
  }
  return out;
}

struct Candidate {
  QAPair pair;
  bool positive = false;
  std::size_t order = 0;
};

}  // namespace

std::string instruction_prompt(OrganId organ) {
  return "What have you found in " + std::string(organ_name(organ)) + "?\n<image>";
}

void BuilderConfig::validate() const {
  if (positive_boost < 1.0) throw std::invalid_argument("positive_boost must be >= 1");
  if (max_duplicate_answers < 1) throw std::invalid_argument("max_duplicate_answers must be >= 1");
  if (min_pairs_per_image < 0) throw std::invalid_argument("min_pairs_per_image must be >= 0");
  if (!(balance_tolerance > 0.0 && balance_tolerance <= 1.0))
    throw std::invalid_argument("balance_tolerance must be in (0, 1]");
}

std::vector<std::string> segment_report(std::string_view report) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    std::string norm = normalize_text(current);
    if (!norm.empty()) out.push_back(std::move(norm));
    current.clear();
  };
  for (std::size_t i = 0; i < report.size(); ++i) {
    const char c = report[i];
    const bool decimal = c == '.' && i > 0 && i + 1 < report.size() &&
                         std::isdigit(static_cast<unsigned char>(report[i - 1])) &&
                         std::isdigit(static_cast<unsigned char>(report[i + 1]));
    if ((c == '.' || c == '?' || c == '!') && !decimal)
      flush();
    else
      current.push_back(c);
  }
  flush();
  return out;
}

bool is_positive_sentence(std::string_view normalized_sentence, const DSGraph& g) {
  const auto words = split_words(normalized_sentence);
  for (OrganId o : kAllOrgans)
    for (const auto& kw : g.keywords(o)) {
      const auto phrase = split_words(kw);
      if (phrase.size() > words.size()) continue;
      for (std::size_t i = 0; i + phrase.size() <= words.size(); ++i)
        if (std::equal(phrase.begin(), phrase.end(), words.begin() + static_cast<std::ptrdiff_t>(i)) &&
            !negated_before(words, i))
          return true;
    }
  return false;
}

bool is_positive_answer(std::string_view answer, const DSGraph& g) {
  for (const auto& s : segment_report(answer))
    if (is_positive_sentence(s, g)) return true;
  return false;
}

int answer_token_count(std::string_view answer) {
  return static_cast<int>(split_words(normalize_text(answer)).size());
}

BuildResult build_qa_pairs(const std::vector<ReportRecord>& corpus, const DSGraph& g, const BuilderConfig& cfg,
                           std::uint64_t seed) {
  cfg.validate();
  BuildResult result;
  BuildStats& st = result.stats;
  st.config = cfg;

  struct ImageGroups {
    std::string id;
    std::vector<Candidate> pairs;
  };
  std::vector<ImageGroups> images;
  images.reserve(corpus.size());
  for (const auto& rec : corpus) {
    OrganArray<std::vector<std::string>> groups;
    for (const auto& s : segment_report(rec.report))
      for (OrganId o : assign_sentence_to_organ(s, g)) groups[index_of(o)].push_back(s);

    ImageGroups ig{rec.image_id, {}};
    for (OrganId o : kAllOrgans) {
      auto& sentences = groups[index_of(o)];
      if (sentences.empty()) continue;
      // Keep whole sentences while the answer stays under the token cap.
      std::vector<std::string> kept;
      int tokens = 0;
      for (const auto& s : sentences) {
        const int n = static_cast<int>(split_words(s).size());
        if (tokens + n > kMaxAnswerTokens - 1) break;
        kept.push_back(s);
        tokens += n;
      }
      if (kept.size() != sentences.size()) ++st.truncated_answers;
      if (kept.empty()) {
        auto words = split_words(sentences.front());
        words.resize(kMaxAnswerTokens - 1);
        std::string cut;
        for (const auto& w : words) cut += (cut.empty() ? "" : " ") + w;
        kept.push_back(cut);
      }
      Candidate c;
      c.pair = {rec.image_id, o, instruction_prompt(o), join_answer(kept)};
      c.positive = std::any_of(kept.begin(), kept.end(), [&](const std::string& s) { return is_positive_sentence(s, g); });
      ig.pairs.push_back(std::move(c));
    }
    st.candidate_pairs += static_cast<int>(ig.pairs.size());
    images.push_back(std::move(ig));
  }

  // Images with richer organ coverage first; ties by id.
  std::stable_sort(images.begin(), images.end(), [](const ImageGroups& a, const ImageGroups& b) {
    return a.pairs.size() != b.pairs.size() ? a.pairs.size() > b.pairs.size() : a.id < b.id;
  });

  std::vector<Candidate> selected;
  std::unordered_map<std::string, int> answer_uses;
  const double keep_normal = 1.0 / cfg.positive_boost;
  bool any_positive = false;
  for (auto& ig : images) {
    if (static_cast<int>(ig.pairs.size()) < cfg.min_pairs_per_image) {
      ++st.skipped_images;
      continue;
    }
    auto rng = stream(seed, "normal:" + ig.id);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& c : ig.pairs) {
      any_positive = any_positive || c.positive;
      const double draw = unit(rng);  // drawn for every pair so the stream is position-stable
      if (!c.positive && draw >= keep_normal) {
        ++st.dropped_normal;
        continue;
      }
      if (++answer_uses[c.pair.answer] > cfg.max_duplicate_answers) {
        ++st.dropped_duplicate;
        continue;
      }
      c.order = selected.size();
      selected.push_back(std::move(c));
    }
  }
  if (!any_positive && cfg.positive_boost > 1.0)
    st.warnings.push_back("corpus has no positive pairs; positive_boost has no effect");

  // Balance: find the largest per-organ cap that puts every organ within the
  // tolerance of the mean, then trim the excess (normal pairs first).
  OrganArray<int> counts{};
  for (const auto& c : selected) ++counts[index_of(c.pair.organ)];
  const int min_count = *std::min_element(counts.begin(), counts.end());
  const int max_count = *std::max_element(counts.begin(), counts.end());
  if (min_count == 0 && max_count > 0) {
    st.warnings.push_back("an organ has no pairs; organ balancing skipped");
  } else if (max_count > 0) {
    auto balanced = [&](int cap) {
      double mean = 0.0;
      for (int n : counts) mean += std::min(n, cap);
      mean /= static_cast<double>(kNumOrgans);
      for (int n : counts) {
        const double v = std::min(n, cap);
        if (v > mean * (1.0 + cfg.balance_tolerance) + 1e-9 || v < mean * (1.0 - cfg.balance_tolerance) - 1e-9)
          return false;
      }
      return true;
    };
    int cap = max_count;
    while (cap > 0 && !balanced(cap)) --cap;

    std::vector<bool> drop(selected.size(), false);
    for (OrganId o : kAllOrgans) {
      const int excess = counts[index_of(o)] - cap;
      if (excess <= 0) continue;
      std::vector<std::size_t> normal, positive;
      for (std::size_t i = 0; i < selected.size(); ++i)
        if (selected[i].pair.organ == o) (selected[i].positive ? positive : normal).push_back(i);
      auto rng = stream(seed, "balance:" + std::string(organ_name(o)));
      std::shuffle(normal.begin(), normal.end(), rng);
      std::shuffle(positive.begin(), positive.end(), rng);
      int left = excess;
      for (auto* pool : {&normal, &positive})
        for (std::size_t i = 0; i < pool->size() && left > 0; ++i, --left) {
          drop[(*pool)[i]] = true;
          if (pool == &positive) ++st.trimmed_positive;
        }
      st.balance_trimmed[index_of(o)] = excess;
    }
    std::vector<Candidate> kept;
    for (std::size_t i = 0; i < selected.size(); ++i)
      if (!drop[i]) kept.push_back(std::move(selected[i]));
    selected = std::move(kept);
  }

  for (auto& c : selected) result.pairs.push_back(std::move(c.pair));
  if (!result.pairs.empty()) {
    BuildStats summary = build_stats(result.pairs, g);
    st.organ_counts = summary.organ_counts;
    st.mean_answer_tokens = summary.mean_answer_tokens;
    st.positive_pairs = summary.positive_pairs;
    st.normal_pairs = summary.normal_pairs;
    st.positive_ratio = summary.positive_ratio;
  }
  return result;
}

BuildStats build_stats(const std::vector<QAPair>& pairs, const DSGraph& g) {
  if (pairs.empty()) throw std::invalid_argument("build_stats: no pairs");
  BuildStats st;
  double tokens = 0.0;
  for (const auto& p : pairs) {
    ++st.organ_counts[index_of(p.organ)];
    tokens += answer_token_count(p.answer);
    if (is_positive_answer(p.answer, g))
      ++st.positive_pairs;
    else
      ++st.normal_pairs;
  }
  st.mean_answer_tokens = tokens / static_cast<double>(pairs.size());
  st.positive_ratio = static_cast<double>(st.positive_pairs) / static_cast<double>(pairs.size());
  return st;
}

std::string BuildStats::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  nlohmann::ordered_json trimmed = nlohmann::ordered_json::object();
  for (OrganId o : kAllOrgans) {
    counts[std::string(organ_name(o))] = organ_counts[index_of(o)];
    trimmed[std::string(organ_name(o))] = balance_trimmed[index_of(o)];
  }
  j["organ_counts"] = counts;
  j["mean_answer_tokens"] = mean_answer_tokens;
  j["positive_pairs"] = positive_pairs;
  j["normal_pairs"] = normal_pairs;
  j["positive_ratio"] = positive_ratio;
  j["candidate_pairs"] = candidate_pairs;
  j["dropped_normal"] = dropped_normal;
  j["dropped_duplicate"] = dropped_duplicate;
  j["skipped_images"] = skipped_images;
  j["truncated_answers"] = truncated_answers;
  j["balance_trimmed"] = trimmed;
  j["trimmed_positive"] = trimmed_positive;
  j["warnings"] = warnings;
  j["config"] = {{"positive_boost", config.positive_boost},
                 {"max_duplicate_answers", config.max_duplicate_answers},
                 {"min_pairs_per_image", config.min_pairs_per_image},
                 {"balance_tolerance", config.balance_tolerance}};
  return j.dump(2);
}

std::string qa_pairs_to_jsonl(const std::vector<QAPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["image_id"] = p.image_id;
    j["organ"] = std::string(organ_name(p.organ));
    j["prompt"] = p.prompt;
    j["answer"] = p.answer;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace orid
