#pragma once

#include "orid/corpus.hpp"
#include "orid/nn.hpp"
#include "orid/organ.hpp"

#include <memory>
#include <vector>

namespace orid {

using ag::Matrix;
using ag::Var;

// Per-organ description token embeddings, each padded or truncated to the
// organ's fixed length.
class DescriptionEmbedder {
 public:
  DescriptionEmbedder() = default;
  DescriptionEmbedder(nn::ParamStore& store, int vocab_size, int dim, nn::Initializer& init);

  Var embed(OrganId o, const TokenSeq& tokens) const;
  OrganArray<Var> operator()(const OrganArray<TokenSeq>& tokens) const;
  const Var& table() const { return table_.table(); }

 private:
  nn::Embedding table_;
};

// Bias-free multi-head attention. Heads split the model dimension evenly;
// their outputs are concatenated and projected by W_O.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(nn::ParamStore& store, const std::string& name, int dim, int heads, nn::Initializer& init);

  // additive_mask (query rows x key rows) may hold -infinity to hide keys.
  // When weights is given it receives one attention matrix per head.
  Var operator()(const Var& query, const Var& keyvalue, const Matrix* additive_mask = nullptr,
                 std::vector<Matrix>* weights = nullptr) const;

  int heads() const { return heads_; }
  Var& w_q() { return wq_; }
  Var& w_k() { return wk_; }
  Var& w_v() { return wv_; }
  Var& w_o() { return wo_; }

 private:
  Var wq_, wk_, wv_, wo_;  // dim x dim
  int dim_ = 0, heads_ = 1;
};

// x^I_T: positionwise sum of the organ grids in canonical order.
Var coarse_image_feature(const OrganArray<Var>& organ_feats);

// x^D_T: organ descriptions stacked in canonical order (224 rows) plus learned
// positional and organ embeddings.
class CoarseDescriptionFeature {
 public:
  CoarseDescriptionFeature() = default;
  CoarseDescriptionFeature(nn::ParamStore& store, int dim, nn::Initializer& init);

  Var operator()(const OrganArray<Var>& desc) const;
  Var& positional() { return pos_; }      // 224 x dim
  Var& organ_embedding() { return org_; }  // 5 x dim

 private:
  Var pos_, org_;
  std::vector<int> organ_of_row_;
};

struct CrossModalFeatures {
  OrganArray<Var> fine;
  Var coarse;  // undefined when coarse fusion is off
};

struct FusionConfig {
  int dim = 32;
  int heads = 8;
  bool share_fine = true;  // one fine-grained attention block for all organs
};

// Attention weights recorded during fusion, one entry per head.
struct FusionAttention {
  OrganArray<std::vector<Matrix>> fine;
  std::vector<Matrix> coarse;
};

class OrganFusion {
 public:
  OrganFusion() = default;
  OrganFusion(nn::ParamStore& store, const FusionConfig& cfg, bool coarse, nn::Initializer& init);

  // fine[o] = MHA(x^I_o, x^D_o); coarse = MHA'(x^I_T, x^D_T) when enabled.
  CrossModalFeatures operator()(const OrganArray<Var>& organ_feats, const OrganArray<Var>& desc,
                                FusionAttention* attention = nullptr) const;

  MultiHeadAttention& fine_attention(OrganId o) { return fine_[cfg_.share_fine ? 0 : index_of(o)]; }
  MultiHeadAttention& coarse_attention() { return coarse_; }
  CoarseDescriptionFeature& coarse_description() { return coarse_desc_; }
  bool has_coarse() const { return has_coarse_; }

 private:
  FusionConfig cfg_;
  std::vector<MultiHeadAttention> fine_;
  bool has_coarse_ = false;
  MultiHeadAttention coarse_;
  CoarseDescriptionFeature coarse_desc_;
};

}  // namespace orid
