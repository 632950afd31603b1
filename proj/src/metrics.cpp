#include "orid/metrics.hpp"

#include "orid/corpus.hpp"
#include "orid/instruct_builder.hpp"
#include "orid/negation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace orid::metrics {

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const Tokens& t, std::size_t n) {
  NgramCounts out;
  if (t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + static_cast<std::ptrdiff_t>(i),
                                                               t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::array<double, 4> bleu_all(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  if (candidates.empty()) throw std::invalid_argument("bleu: empty candidate set");
  if (candidates.size() != references.size()) throw std::invalid_argument("bleu: candidate/reference count mismatch");
  std::array<double, 4> clipped{}, total{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    cand_len += static_cast<double>(candidates[s].size());
    ref_len += static_cast<double>(references[s].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto c = ngrams(candidates[s], n);
      const auto r = ngrams(references[s], n);
      for (const auto& [g, k] : c) {
        total[n - 1] += k;
        auto it = r.find(g);
        if (it != r.end()) clipped[n - 1] += std::min(k, it->second);
      }
    }
  }
  std::array<double, 4> out{};
  if (cand_len == 0.0) return out;
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double num = clipped[n] > 0.0 ? clipped[n] : kBleuEpsilon;
    log_sum += std::log(num / std::max(total[n], 1.0));
    out[n] = bp * std::exp(log_sum / static_cast<double>(n + 1));
  }
  return out;
}

double bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, int max_n) {
  if (max_n < 1 || max_n > 4) throw std::invalid_argument("bleu: order must be in 1..4");
  return bleu_all(candidates, references)[static_cast<std::size_t>(max_n - 1)];
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  const double b2 = kRougeBeta * kRougeBeta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

std::string stem(const std::string& word) {
  std::string w = word;
  if (ends_with(w, "ies") && w.size() > 4) {
    w.replace(w.size() - 3, 3, "y");
  } else if (ends_with(w, "es") && w.size() > 4 &&
             (ends_with(w, "sses") || ends_with(w, "xes") || ends_with(w, "zes") || ends_with(w, "ches") ||
              ends_with(w, "shes"))) {
    w.resize(w.size() - 2);
  } else if (ends_with(w, "s") && !ends_with(w, "ss") && w.size() > 3) {
    w.resize(w.size() - 1);
  }
  if (ends_with(w, "ing") && w.size() >= 6)
    w.resize(w.size() - 3);
  else if (ends_with(w, "ed") && w.size() >= 5)
    w.resize(w.size() - 2);
  if (ends_with(w, "e") && w.size() > 3) w.resize(w.size() - 1);
  return w;
}

double meteor(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  std::vector<int> cand_to_ref(candidate.size(), -1);
  std::vector<bool> ref_used(reference.size(), false);

  // Each stage prefers the reference slot right after the previous match so
  // that in-order runs stay in one chunk.
  auto align = [&](auto&& same) {
    int last = -2;
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      if (cand_to_ref[i] >= 0) {
        last = cand_to_ref[i];
        continue;
      }
      int pick = -1;
      const int next = last + 1;
      if (next >= 0 && next < static_cast<int>(reference.size()) && !ref_used[static_cast<std::size_t>(next)] &&
          same(candidate[i], reference[static_cast<std::size_t>(next)]))
        pick = next;
      for (std::size_t j = 0; j < reference.size() && pick < 0; ++j)
        if (!ref_used[j] && same(candidate[i], reference[j])) pick = static_cast<int>(j);
      if (pick >= 0) {
        cand_to_ref[i] = pick;
        ref_used[static_cast<std::size_t>(pick)] = true;
        last = pick;
      }
    }
  };
  align([](const std::string& a, const std::string& b) { return a == b; });
  align([](const std::string& a, const std::string& b) { return stem(a) == stem(b); });

  double matches = 0.0, chunks = 0.0;
  int prev_ref = -2;
  bool prev_matched = false;
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const int r = cand_to_ref[i];
    if (r < 0) {
      prev_matched = false;
      continue;
    }
    matches += 1.0;
    if (!(prev_matched && r == prev_ref + 1)) chunks += 1.0;
    prev_ref = r;
    prev_matched = true;
  }
  if (matches == 0.0) return 0.0;
  const double p = matches / static_cast<double>(candidate.size());
  const double r = matches / static_cast<double>(reference.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(chunks / matches, 3.0);
  return f_mean * (1.0 - penalty);
}

const char* observation_name(Observation o) {
  static const char* const kNames[kNumObservations] = {
      "atelectasis",   "cardiomegaly",     "consolidation", "edema",         "enlarged cardiomediastinum",
      "fracture",      "lung lesion",      "lung opacity",  "no finding",    "pleural effusion",
      "pleural other", "pneumonia",        "pneumothorax",  "support devices"};
  return kNames[static_cast<int>(o)];
}

KeywordLabeler::KeywordLabeler() {
  auto set = [this](Observation o, std::vector<std::string> kws) { keywords_[static_cast<std::size_t>(o)] = std::move(kws); };
  set(Observation::Atelectasis, {"atelectasis", "atelectatic"});
  set(Observation::Cardiomegaly, {"cardiomegaly", "enlarged heart", "heart is enlarged", "heart size is enlarged",
                                  "heart size is mildly enlarged", "heart size is moderately enlarged",
                                  "heart size is severely enlarged"});
  set(Observation::Consolidation, {"consolidation", "consolidations"});
  set(Observation::Edema, {"edema"});
  set(Observation::EnlargedCardiomediastinum, {"widened mediastinum", "mediastinal widening",
                                               "enlarged cardiomediastinal silhouette", "hilar enlargement",
                                               "mediastinal contour is widened"});
  set(Observation::Fracture, {"fracture", "fractures"});
  set(Observation::LungLesion, {"nodule", "nodules", "mass", "lesion"});
  set(Observation::LungOpacity, {"opacity", "opacities", "infiltrate"});
  set(Observation::PleuralEffusion, {"pleural effusion", "pleural effusions"});
  set(Observation::PleuralOther, {"pleural thickening", "pleural scarring"});
  set(Observation::Pneumonia, {"pneumonia"});
  set(Observation::Pneumothorax, {"pneumothorax"});
  set(Observation::SupportDevices, {"pacemaker", "catheter", "endotracheal tube", "picc line", "support device",
                                    "support devices", "sternotomy wires"});
}

LabelVector KeywordLabeler::label(std::string_view report) const {
  LabelVector out;
  for (const auto& sentence : segment_report(report)) {
    const auto words = split_words(sentence);
    for (int k = 0; k < kNumObservations; ++k) {
      for (const auto& kw : keywords_[static_cast<std::size_t>(k)]) {
        const auto phrase = split_words(kw);
        for (std::size_t i = 0; i + phrase.size() <= words.size(); ++i) {
          if (!std::equal(phrase.begin(), phrase.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) continue;
          Label& l = out.labels[static_cast<std::size_t>(k)];
          if (negated_before(words, i)) {
            if (l == Label::Unmentioned) l = Label::Absent;
          } else {
            l = Label::Present;
          }
        }
      }
    }
  }
  const bool any_present =
      std::any_of(out.labels.begin(), out.labels.end(), [](Label l) { return l == Label::Present; });
  out[Observation::NoFinding] = any_present ? Label::Unmentioned : Label::Present;
  return out;
}

LabelVector ce_labels(std::string_view report) {
  static const KeywordLabeler labeler;
  return labeler.label(report);
}

PRF ce_prf(const std::vector<LabelVector>& predicted, const std::vector<LabelVector>& reference) {
  if (predicted.size() != reference.size()) throw std::invalid_argument("ce_prf: label list length mismatch");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t s = 0; s < predicted.size(); ++s)
    for (int k = 0; k < kNumObservations; ++k) {
      const bool p = predicted[s].labels[static_cast<std::size_t>(k)] == Label::Present;
      const bool r = reference[s].labels[static_cast<std::size_t>(k)] == Label::Present;
      tp += p && r;
      fp += p && !r;
      fn += !p && r;
    }
  PRF out;
  out.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  out.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  out.f1 = out.precision + out.recall > 0 ? 2 * out.precision * out.recall / (out.precision + out.recall) : 0.0;
  return out;
}

std::vector<std::pair<std::string, double>> MetricTable::nlg_columns() const {
  return {{"BLEU@1", bleu[0]}, {"BLEU@2", bleu[1]}, {"BLEU@3", bleu[2]},
          {"BLEU@4", bleu[3]}, {"METEOR", meteor},  {"ROUGE-L", rouge_l}};
}

std::vector<std::pair<std::string, double>> MetricTable::ce_columns() const {
  return {{"Precision", ce.precision}, {"Recall", ce.recall}, {"F1", ce.f1}};
}

std::string MetricTable::to_text() const {
  std::string out;
  char buf[64];
  for (const auto& rows : {nlg_columns(), ce_columns()}) {
    std::string head, vals;
    for (const auto& [name, v] : rows) {
      std::snprintf(buf, sizeof buf, "%-10s", name.c_str());
      head += buf;
      std::snprintf(buf, sizeof buf, "%-10.4f", v);
      vals += buf;
    }
    out += head + "\n" + vals + "\n";
  }
  return out;
}

std::string MetricTable::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json nlg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : nlg_columns()) nlg[k] = v;
  nlohmann::ordered_json ce_j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : ce_columns()) ce_j[k] = v;
  j["nlg"] = nlg;
  j["ce"] = ce_j;
  return j.dump(2);
}

MetricTable score_corpus(const std::vector<std::string>& predictions, const std::vector<std::string>& references) {
  if (predictions.size() != references.size())
    throw std::invalid_argument("score: prediction/reference count mismatch");
  std::vector<Tokens> cands, refs;
  std::vector<LabelVector> pl, rl;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    cands.push_back(split_words(normalize_text(predictions[i])));
    refs.push_back(split_words(normalize_text(references[i])));
    pl.push_back(ce_labels(predictions[i]));
    rl.push_back(ce_labels(references[i]));
  }
  MetricTable t;
  t.bleu = bleu_all(cands, refs);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    t.meteor += meteor(cands[i], refs[i]);
    t.rouge_l += rouge_l(cands[i], refs[i]);
  }
  t.meteor /= static_cast<double>(cands.size());
  t.rouge_l /= static_cast<double>(cands.size());
  t.ce = ce_prf(pl, rl);
  return t;
}

}  // namespace orid::metrics
