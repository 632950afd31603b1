#include "orid/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace orid {

namespace {

std::string fill(std::string tmpl, const std::string& sev, const std::string& side) {
  auto replace = [&](const std::string& key, const std::string& val) {
    for (auto pos = tmpl.find(key); pos != std::string::npos; pos = tmpl.find(key, pos + val.size()))
      tmpl.replace(pos, key.size(), val);
  };
  replace("{sev}", sev);
  replace("{side}", side);
  return tmpl;
}

// Layout on a 64x64 canvas, scaled to the requested size.
std::vector<Region> layout64(OrganId o) {
  switch (o) {
    case OrganId::Lung: return {{10, 44, 6, 24}, {10, 44, 40, 58}};
    case OrganId::Heart: return {{30, 52, 24, 40}};
    case OrganId::Bone: return {{4, 60, 0, 4}, {4, 60, 60, 64}, {56, 64, 4, 60}};
    case OrganId::Pleural: return {{44, 54, 6, 24}, {44, 54, 40, 58}};
    case OrganId::Mediastinum: return {{4, 30, 26, 38}};
  }
  return {};
}

const char* const kSides[] = {"left", "right"};

// Texture of finding k: distinct orientation/periodicity per finding index.
bool texture_on(int k, int y, int x) {
  switch (k % 5) {
    case 0: return y % 2 == 0;
    case 1: return x % 2 == 0;
    case 2: return (x + y) % 2 == 0;
    case 3: return (x + y) % 3 == 0;
    default: return y % 3 == 0 && x % 3 == 0;
  }
}

}  // namespace

SynthGrammar default_synth_grammar() {
  SynthGrammar g;
  const std::vector<std::string> mild = {"mild", "moderate", "severe"};
  const std::vector<std::string> size = {"small", "moderate", "large"};

  auto& lung = g.organs[index_of(OrganId::Lung)];
  lung.normal_sentence = "the lungs are clear";
  lung.normal_description = "the lungs appear clear";
  lung.findings = {
      {"pneumonia", "there is {sev} {side} lower lobe pneumonia", "the lung shows {sev} {side} pneumonia", mild, true},
      {"atelectasis", "there is {sev} {side} basilar atelectasis", "the lung shows {sev} {side} atelectasis", mild,
       true},
      {"pneumothorax", "there is a {sev} {side} pneumothorax", "the lung shows a {sev} {side} pneumothorax", size,
       true},
      {"pulmonary edema", "there is {sev} pulmonary edema", "the lung shows {sev} pulmonary edema", mild, false},
  };

  auto& heart = g.organs[index_of(OrganId::Heart)];
  heart.normal_sentence = "the cardiac silhouette is within normal limits";
  heart.normal_description = "the heart appears normal";
  heart.findings = {
      {"cardiomegaly", "there is {sev} cardiomegaly", "the heart shows {sev} cardiomegaly", mild, false},
      {"heart size", "the heart size is {sev} enlarged", "the heart size is {sev} enlarged",
       {"mildly", "moderately", "severely"}, false},
  };

  auto& bone = g.organs[index_of(OrganId::Bone)];
  bone.normal_sentence = "the osseous structures are intact";
  bone.normal_description = "the bones appear intact";
  bone.findings = {
      {"rib fracture", "there is a {sev} {side} rib fracture", "the bone shows a {sev} {side} rib fracture",
       {"healed", "subacute", "displaced"}, true},
      {"degenerative changes", "there are {sev} degenerative changes of the {side} shoulder",
       "the bone shows {sev} {side} degenerative changes", mild, true},
      {"scoliosis", "there is {sev} scoliosis", "the bone shows {sev} scoliosis", mild, false},
  };

  auto& pleural = g.organs[index_of(OrganId::Pleural)];
  pleural.normal_sentence = "there is no pleural effusion";
  pleural.normal_description = "the pleura appears normal";
  pleural.findings = {
      {"pleural effusion", "there is a {sev} {side} pleural effusion",
       "the pleura shows a {sev} {side} pleural effusion", size, true},
      {"pleural thickening", "there is {sev} {side} pleural thickening",
       "the pleura shows {sev} {side} pleural thickening", {"mild", "moderate", "marked"}, true},
  };

  auto& med = g.organs[index_of(OrganId::Mediastinum)];
  med.normal_sentence = "the mediastinum is unremarkable";
  med.normal_description = "the mediastinum appears normal";
  med.findings = {
      {"hilar enlargement", "there is {sev} hilar enlargement", "the mediastinum shows {sev} hilar enlargement",
       {"mild", "moderate", "marked"}, false},
      {"aortic calcification", "there is {sev} aortic calcification",
       "the mediastinum shows {sev} aortic calcification", mild, false},
      {"tortuous aorta", "there is a {sev} tortuous aorta", "the mediastinum shows a {sev} tortuous aorta",
       {"mildly", "moderately", "markedly"}, false},
  };
  return g;
}

std::vector<Region> organ_regions(OrganId o, int image_size) {
  std::vector<Region> out;
  for (const Region& r : layout64(o)) {
    auto s = [image_size](int v) { return v * image_size / 64; };
    out.push_back({s(r.y0), s(r.y1), s(r.x0), s(r.x1)});
  }
  return out;
}

MaskBundle synth_masks(int image_size) {
  MaskBundle b;
  for (OrganId o : kAllOrgans) {
    const int channels = mask_channels(o);
    MaskStack stack(channels, image_size, image_size);
    std::vector<std::pair<int, int>> pixels;
    for (const Region& r : organ_regions(o, image_size))
      for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x) pixels.emplace_back(y, x);
    // Contiguous chunks, one per channel; small images leave trailing channels empty.
    const std::size_t n = pixels.size();
    for (std::size_t i = 0; i < n; ++i) {
      const int c = static_cast<int>(i * static_cast<std::size_t>(channels) / std::max<std::size_t>(n, 1));
      stack.at(c, pixels[i].first, pixels[i].second) = 1;
    }
    b[o] = std::move(stack);
  }
  return b;
}

SynthDataset synth_dataset(std::uint64_t seed, int n, const SynthGrammar& grammar) {
  if (n < 1) throw std::invalid_argument("synth_dataset: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, grammar.noise);
  const int size = grammar.image_size;
  const MaskBundle masks = synth_masks(size);
  const auto splits = assign_splits(n, grammar.ratio);

  SynthDataset out;
  for (int i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "synth-%05d", i);
    RawCase c;
    c.id = id;
    c.split = splits[static_cast<std::size_t>(i)];
    c.masks = masks;
    c.masks.missing = false;
    c.image = Image(size, size, 1);
    for (float& v : c.image.data) v = 0.1f;

    OrganArray<SynthLabel> labels;
    for (OrganId o : kAllOrgans) {
      const OrganGrammar& og = grammar.organs[index_of(o)];
      SynthLabel lab;
      lab.organ = o;
      if (!og.findings.empty() && unit(rng) < grammar.disease_probability) {
        lab.finding = static_cast<int>(unit(rng) * static_cast<double>(og.findings.size()));
        lab.finding = std::min(lab.finding, static_cast<int>(og.findings.size()) - 1);
        const FindingTemplate& f = og.findings[static_cast<std::size_t>(lab.finding)];
        lab.severity = std::min(static_cast<int>(unit(rng) * static_cast<double>(f.severities.size())),
                                static_cast<int>(f.severities.size()) - 1);
        lab.side = unit(rng) < 0.5 ? 0 : 1;
        const std::string side = f.sided ? kSides[lab.side] : "";
        lab.sentence = fill(f.sentence, f.severities[static_cast<std::size_t>(lab.severity)], side);
        c.descriptions[index_of(o)] = fill(f.description, f.severities[static_cast<std::size_t>(lab.severity)], side);
      } else {
        lab.sentence = og.normal_sentence;
        c.descriptions[index_of(o)] = og.normal_description;
      }

      // Normal tissue everywhere in the organ; the finding texture on the
      // affected side (or every region for unsided findings).
      const auto regions = organ_regions(o, size);
      for (std::size_t r = 0; r < regions.size(); ++r) {
        const Region& reg = regions[r];
        bool affected = lab.finding >= 0;
        if (affected && og.findings[static_cast<std::size_t>(lab.finding)].sided && regions.size() > 1)
          affected = static_cast<int>(r) == std::min<int>(lab.side, static_cast<int>(regions.size()) - 1);
        const double amp = 0.2 * (lab.severity + 1);
        for (int y = reg.y0; y < reg.y1; ++y)
          for (int x = reg.x0; x < reg.x1; ++x) {
            double v = 0.3;
            if (affected && texture_on(lab.finding, y, x)) v += amp;
            c.image.at(y, x, 0) = static_cast<float>(v);
          }
      }
      labels[index_of(o)] = std::move(lab);
    }
    for (float& v : c.image.data) v = static_cast<float>(std::clamp(v + noise(rng), 0.0, 1.0));

    std::string report;
    for (OrganId o : grammar.report_order) {
      if (!report.empty()) report += " ";
      report += labels[index_of(o)].sentence + ".";
    }
    c.report = report;

    ManifestRecord rec;
    rec.id = c.id;
    rec.image_path = "images/" + c.id + ".npy";
    rec.mask_path = "masks/" + c.id + ".omsk";
    rec.descriptions = c.descriptions;
    rec.report = c.report;
    rec.split = c.split;
    out.manifest.records.push_back(std::move(rec));
    out.cases.push_back(std::move(c));
    out.labels.push_back(std::move(labels));
  }
  return out;
}

}  // namespace orid
