#pragma once

#include <string>
#include <vector>

namespace orid {

// Cues that negate a finding mentioned later in the same sentence.
inline const std::vector<std::vector<std::string>>& negation_cues() {
  static const std::vector<std::vector<std::string>> kCues = {
      {"no"}, {"without"}, {"free", "of"}, {"clear", "of"}, {"resolved"}};
  return kCues;
}

// True when any negation cue ends before word position `pos`.
inline bool negated_before(const std::vector<std::string>& words, std::size_t pos) {
  for (const auto& cue : negation_cues()) {
    if (cue.size() > pos) continue;
    for (std::size_t start = 0; start + cue.size() <= pos; ++start) {
      bool match = true;
      for (std::size_t k = 0; k < cue.size() && match; ++k) match = words[start + k] == cue[k];
      if (match) return true;
    }
  }
  return false;
}

}  // namespace orid
