#include "orid/ds_graph.hpp"

#include "orid/array_io.hpp"
#include "orid/corpus.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace orid {

namespace {

constexpr std::string_view kDefaultGraph = R"(# organ: finding keywords
lung: pulmonary edema, pneumonia, atelectasis, consolidation, pneumothorax, opacity, nodule, emphysema
heart: cardiomegaly, heart size, pericardial effusion
bone: rib fracture, degenerative changes, scoliosis, fracture, osteopenia
pleural: pleural effusion, pleural thickening, blunting of the costophrenic angle
mediastinum: mediastinal contour, hilar enlargement, aortic calcification, tortuous aorta, widened mediastinum
edges: lung-pleural, heart-mediastinum, heart-lung
)";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

OrganId require_organ(const std::string& name) {
  auto o = parse_organ(name);
  if (!o) throw std::runtime_error("unknown organ in DS-Graph: " + name);
  return *o;
}

}  // namespace

DSGraph parse_ds_graph(std::string_view text) {
  DSGraph g;
  OrganArray<bool> seen{};
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw std::runtime_error("DS-Graph line without ':': " + line);
    const std::string key = trim(line.substr(0, colon));
    const std::string rest = line.substr(colon + 1);
    if (key == "edges") {
      for (const auto& edge : split_list(rest)) {
        const auto dash = edge.find('-');
        if (dash == std::string::npos) throw std::runtime_error("bad DS-Graph edge: " + edge);
        g.comorbidities.emplace_back(require_organ(trim(edge.substr(0, dash))),
                                     require_organ(trim(edge.substr(dash + 1))));
      }
      continue;
    }
    const OrganId o = require_organ(key);
    seen[index_of(o)] = true;
    for (const auto& kw : split_list(rest)) {
      const std::string norm = normalize_text(kw);
      if (!norm.empty()) g.organ_diseases[index_of(o)].insert(norm);
    }
  }
  for (OrganId o : kAllOrgans) {
    if (!seen[index_of(o)]) throw std::runtime_error("DS-Graph missing organ: " + std::string(organ_name(o)));
    if (g.keywords(o).empty())
      throw std::runtime_error("DS-Graph organ has no keywords: " + std::string(organ_name(o)));
  }
  return g;
}

DSGraph load_ds_graph(const std::string& path) { return parse_ds_graph(io::read_file(path)); }

std::string format_ds_graph(const DSGraph& g) {
  std::string out;
  for (OrganId o : kAllOrgans) {
    out += std::string(organ_name(o)) + ":";
    bool first = true;
    for (const auto& kw : g.keywords(o)) {
      out += (first ? " " : ", ") + kw;
      first = false;
    }
    out += "\n";
  }
  if (!g.comorbidities.empty()) {
    out += "edges:";
    for (std::size_t i = 0; i < g.comorbidities.size(); ++i)
      out += (i ? ", " : " ") + std::string(organ_name(g.comorbidities[i].first)) + "-" +
             std::string(organ_name(g.comorbidities[i].second));
    out += "\n";
  }
  return out;
}

std::string_view default_ds_graph_text() { return kDefaultGraph; }

const DSGraph& default_ds_graph() {
  static const DSGraph g = parse_ds_graph(kDefaultGraph);
  return g;
}

const std::vector<std::string>& organ_aliases(OrganId o) {
  static const OrganArray<std::vector<std::string>> kAliases = {{
      {"lung", "lungs", "pulmonary"},
      {"heart", "cardiac"},
      {"bone", "bones", "osseous", "bony"},
      {"pleural", "pleura"},
      {"mediastinum", "mediastinal"},
  }};
  return kAliases[index_of(o)];
}

bool contains_phrase(const std::vector<std::string>& words, const std::vector<std::string>& phrase) {
  if (phrase.empty() || phrase.size() > words.size()) return false;
  return std::search(words.begin(), words.end(), phrase.begin(), phrase.end()) != words.end();
}

std::set<OrganId> assign_sentence_to_organ(std::string_view sentence, const DSGraph& g) {
  const auto words = split_words(sentence);
  std::set<OrganId> out;
  for (OrganId o : kAllOrgans) {
    bool hit = false;
    for (const auto& kw : g.keywords(o))
      if (contains_phrase(words, split_words(kw))) {
        hit = true;
        break;
      }
    if (!hit)
      hit = std::any_of(organ_aliases(o).begin(), organ_aliases(o).end(),
                        [&](const std::string& a) { return std::find(words.begin(), words.end(), a) != words.end(); });
    if (hit) out.insert(o);
  }
  return out;
}

AdjacencyMatrix build_adjacency(const DSGraph& g) {
  AdjacencyMatrix a = AdjacencyMatrix::Identity();
  for (std::size_t i = 0; i < kNumOrgans; ++i)
    for (std::size_t j = i + 1; j < kNumOrgans; ++j) {
      const auto& ki = g.organ_diseases[i];
      const auto& kj = g.organ_diseases[j];
      const bool shared = std::any_of(ki.begin(), ki.end(), [&](const std::string& k) { return kj.count(k) != 0; });
      if (shared) a(static_cast<int>(i), static_cast<int>(j)) = a(static_cast<int>(j), static_cast<int>(i)) = 1.0;
    }
  for (const auto& [x, y] : g.comorbidities) {
    const int i = static_cast<int>(index_of(x)), j = static_cast<int>(index_of(y));
    a(i, j) = a(j, i) = 1.0;
  }
  const int t = static_cast<int>(kTotalNode);
  a.row(t).setOnes();
  a.col(t).setOnes();
  return a;
}

}  // namespace orid
