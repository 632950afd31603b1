#pragma once

#include "orid/corpus.hpp"
#include "orid/ds_graph.hpp"
#include "orid/generator.hpp"
#include "orid/ocf.hpp"
#include "orid/oica.hpp"
#include "orid/vision.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace orid {

// Module switches of the ablation table. Coarse fusion needs fine fusion and
// importance analysis needs coarse fusion.
struct Toggles {
  bool use_mask = true;
  bool use_ocf_fine = true;
  bool use_ocf_coarse = true;
  bool use_oica = true;

  void validate() const;
  // Rows 1..5: baseline, +mask, +fine fusion, +coarse fusion, +importance.
  static Toggles ablation_row(int row);
  std::string describe() const;
  bool operator==(const Toggles&) const = default;
};

struct ModelConfig {
  std::string preset = "desk";
  VisionConfig vision;
  int ocf_heads = 8;
  bool share_fine_attention = true;
  int gat_heads = 8;
  int gat_layers = 2;
  int mlp_hidden = 32;
  int gen_layers = 3;
  int gen_heads = 8;
  int ffn = 64;
  int vocab_size = 0;
  int report_len = kDefaultReportLength;

  int dim() const { return vision.dim; }
  int positions() const { return vision.positions(); }
  void validate() const;

  static ModelConfig toy();
  static ModelConfig desk();
  static ModelConfig full();
  static ModelConfig preset_named(const std::string& name);

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

using Alpha = std::array<double, kNumOrgans>;

// Everything computed on the way from pixels to the encoded image.
struct ForwardTrace {
  RawImageExtractor::Output raw;
  OrganArray<Var> mask_features;  // undefined without masks
  OrganArray<Var> organ_features;
  OrganArray<Var> descriptions;   // undefined without fine fusion
  CrossModalFeatures cross;
  Var alpha;                      // undefined without importance analysis
  FinalFeatures final;
  EncodedImage encoded;
  FusionAttention attention;                    // filled when recording
  std::vector<std::vector<Matrix>> graph_attention;  // per layer, per head
};

class OridModel {
 public:
  OridModel(const ModelConfig& cfg, const Toggles& toggles, const AdjacencyMatrix& adjacency, std::uint64_t seed);

  ForwardTrace forward(const Var& pixels, const OrganArray<Var>& mask_stacks, const OrganArray<TokenSeq>& descriptions,
                       bool record_attention = false) const;
  ForwardTrace forward(const Sample& s, bool record_attention = false) const;

  // Teacher-forced loss of one sample.
  LossParts loss(const Sample& s, double beta) const;

  // Beam-search report; alpha receives the importance coefficients when the
  // importance module is active.
  Hypothesis generate(const Sample& s, int width, std::optional<Alpha>* alpha = nullptr) const;

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const Toggles& toggles() const { return toggles_; }
  const AdjacencyMatrix& adjacency() const { return adjacency_; }

  RawImageExtractor& raw_extractor() { return raw_; }
  OrganFusion& fusion() { return fusion_; }
  ImportanceAnalyzer& importance() { return oica_; }
  ReportGenerator& generator() { return gen_; }

  // Test hook: replaces the computed coefficients.
  std::optional<Alpha> alpha_override;

 private:
  ModelConfig cfg_;
  Toggles toggles_;
  AdjacencyMatrix adjacency_;
  nn::ParamStore store_;
  RawImageExtractor raw_;
  MaskExtractor mask_;
  DescriptionEmbedder desc_;
  OrganFusion fusion_;
  ImportanceAnalyzer oica_;
  ReportGenerator gen_;
};

}  // namespace orid
