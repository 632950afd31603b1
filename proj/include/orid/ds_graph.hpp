#pragma once

#include "orid/organ.hpp"

#include <Eigen/Dense>

#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace orid {

// Prior knowledge linking each organ region to the findings it hosts.
struct DSGraph {
  OrganArray<std::set<std::string>> organ_diseases;
  // Co-morbidity edges that connect organs even without shared findings.
  std::vector<std::pair<OrganId, OrganId>> comorbidities;

  const std::set<std::string>& keywords(OrganId o) const { return organ_diseases[index_of(o)]; }
};

// 6x6 binary matrix over (lung, heart, bone, pleural, mediastinum, total).
using AdjacencyMatrix = Eigen::Matrix<double, 6, 6>;

// File format, one entry per line, '#' starts a comment:
//   <organ>: keyword phrase, keyword phrase, ...
//   edges: lung-pleural, heart-mediastinum
// Every organ must be present with at least one keyword.
DSGraph parse_ds_graph(std::string_view text);
DSGraph load_ds_graph(const std::string& path);
std::string format_ds_graph(const DSGraph& g);

// Text of the bundled default graph.
std::string_view default_ds_graph_text();
const DSGraph& default_ds_graph();

// Name and adjective forms that identify an organ without a finding keyword.
const std::vector<std::string>& organ_aliases(OrganId o);

// Organs whose keyword phrases or aliases occur as contiguous word runs in the
// (already normalized) sentence.
std::set<OrganId> assign_sentence_to_organ(std::string_view sentence, const DSGraph& g);

// True when `phrase` occurs as a contiguous word subsequence of `words`.
bool contains_phrase(const std::vector<std::string>& words, const std::vector<std::string>& phrase);

AdjacencyMatrix build_adjacency(const DSGraph& g);

}  // namespace orid
