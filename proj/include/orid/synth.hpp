#pragma once

#include "orid/corpus.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace orid {

// One abnormal finding an organ can show. Sentence and description templates
// may contain {sev} and {side}; {side} is only filled for sided findings.
struct FindingTemplate {
  std::string key;
  std::string sentence;
  std::string description;
  std::vector<std::string> severities;
  bool sided = false;
};

struct OrganGrammar {
  std::string normal_sentence;
  std::string normal_description;
  std::vector<FindingTemplate> findings;
};

// Generative grammar of the synthetic corpus: per-organ templates plus the
// image-rendering knobs. Each organ independently shows at most one finding.
struct SynthGrammar {
  OrganArray<OrganGrammar> organs;
  double disease_probability = 0.5;
  int image_size = 64;
  double noise = 0.05;
  std::array<OrganId, kNumOrgans> report_order = {OrganId::Heart, OrganId::Mediastinum, OrganId::Lung,
                                                  OrganId::Pleural, OrganId::Bone};
  SplitRatio ratio;
};

SynthGrammar default_synth_grammar();

// Ground truth for one organ of one generated case.
struct SynthLabel {
  OrganId organ = OrganId::Lung;
  int finding = -1;  // index into OrganGrammar::findings, -1 for normal
  int severity = 0;
  int side = 0;      // 0 left, 1 right
  std::string sentence;
};

struct SynthDataset {
  DatasetManifest manifest;
  std::vector<RawCase> cases;
  std::vector<OrganArray<SynthLabel>> labels;
};

// Deterministic in (seed, n, grammar). Findings are painted as organ-specific
// textures inside each organ's mask region, so reports are recoverable from
// the image as well as from the descriptions.
SynthDataset synth_dataset(std::uint64_t seed, int n, const SynthGrammar& grammar = default_synth_grammar());

// Pixel regions (y0, y1, x0, x1; half-open) of an organ at the given size.
struct Region {
  int y0, y1, x0, x1;
};
std::vector<Region> organ_regions(OrganId o, int image_size);

// Partitions each organ's region pixels into its fixed number of mask channels.
MaskBundle synth_masks(int image_size);

}  // namespace orid
