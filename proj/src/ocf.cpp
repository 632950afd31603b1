#include "orid/ocf.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace orid {

DescriptionEmbedder::DescriptionEmbedder(nn::ParamStore& store, int vocab_size, int dim, nn::Initializer& init)
    : table_(store, "ocf.desc_embedding", vocab_size, dim, init) {}

Var DescriptionEmbedder::embed(OrganId o, const TokenSeq& tokens) const {
  std::vector<int> ids(static_cast<std::size_t>(desc_length(o)), special::kPad);
  std::copy_n(tokens.begin(), std::min(tokens.size(), ids.size()), ids.begin());
  const auto vocab = table_.table().rows();
  for (int id : ids)
    if (id < 0 || id >= vocab)
      throw std::out_of_range("description token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(vocab));
  return table_(ids);
}

OrganArray<Var> DescriptionEmbedder::operator()(const OrganArray<TokenSeq>& tokens) const {
  OrganArray<Var> out;
  for (OrganId o : kAllOrgans) out[index_of(o)] = embed(o, tokens[index_of(o)]);
  return out;
}

MultiHeadAttention::MultiHeadAttention(nn::ParamStore& store, const std::string& name, int dim, int heads,
                                       nn::Initializer& init)
    : dim_(dim), heads_(heads) {
  if (heads < 1 || dim % heads != 0)
    throw std::invalid_argument("attention: dim " + std::to_string(dim) + " is not divisible by " +
                                std::to_string(heads) + " heads");
  wq_ = store.add(name + ".w_q", init.xavier(dim, dim), nn::ParamGroup::Other);
  wk_ = store.add(name + ".w_k", init.xavier(dim, dim), nn::ParamGroup::Other);
  wv_ = store.add(name + ".w_v", init.xavier(dim, dim), nn::ParamGroup::Other);
  wo_ = store.add(name + ".w_o", init.xavier(dim, dim), nn::ParamGroup::Other);
}

Var MultiHeadAttention::operator()(const Var& query, const Var& keyvalue, const Matrix* additive_mask,
                                   std::vector<Matrix>* weights) const {
  if (query.cols() != dim_ || keyvalue.cols() != dim_)
    throw std::invalid_argument("attention: inputs must have " + std::to_string(dim_) + " columns");
  if (keyvalue.rows() < 1) throw std::invalid_argument("attention: empty key set");
  const Var q = ag::matmul(query, wq_);
  const Var k = ag::matmul(keyvalue, wk_);
  const Var v = ag::matmul(keyvalue, wv_);
  const Var cat = ag::multi_head_attention(q, k, v, heads_, additive_mask, weights);
  return ag::matmul(cat, wo_);
}

Var coarse_image_feature(const OrganArray<Var>& organ_feats) {
  Var acc = organ_feats[0];
  for (std::size_t i = 1; i < kNumOrgans; ++i) {
    const Var& g = organ_feats[i];
    if (g.rows() != acc.rows() || g.cols() != acc.cols())
      throw std::invalid_argument("coarse image feature: organ grids differ in shape");
    acc = ag::add(acc, g);
  }
  return acc;
}

CoarseDescriptionFeature::CoarseDescriptionFeature(nn::ParamStore& store, int dim, nn::Initializer& init) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  pos_ = store.add("ocf.coarse.positional", init.uniform(kTotalDescLength, dim, bound), nn::ParamGroup::Other);
  org_ = store.add("ocf.coarse.organ", init.uniform(kNumOrgans, dim, bound), nn::ParamGroup::Other);
  for (OrganId o : kAllOrgans) organ_of_row_.insert(organ_of_row_.end(), desc_length(o), static_cast<int>(index_of(o)));
}

Var CoarseDescriptionFeature::operator()(const OrganArray<Var>& desc) const {
  for (OrganId o : kAllOrgans) {
    const Var& m = desc[index_of(o)];
    if (m.rows() != desc_length(o) || m.cols() != pos_.cols())
      throw std::invalid_argument("coarse description: " + std::string(organ_name(o)) + " matrix must be " +
                                  std::to_string(desc_length(o)) + "x" + std::to_string(pos_.cols()));
  }
  const Var cat = ag::concat_rows(std::span<const Var>(desc.data(), desc.size()));
  return ag::add(ag::add(cat, pos_), ag::gather_rows(org_, organ_of_row_));
}

OrganFusion::OrganFusion(nn::ParamStore& store, const FusionConfig& cfg, bool coarse, nn::Initializer& init)
    : cfg_(cfg), has_coarse_(coarse) {
  if (cfg.share_fine) {
    fine_.emplace_back(store, "ocf.fine", cfg.dim, cfg.heads, init);
  } else {
    for (OrganId o : kAllOrgans)
      fine_.emplace_back(store, "ocf.fine." + std::string(organ_name(o)), cfg.dim, cfg.heads, init);
  }
  if (coarse) {
    coarse_desc_ = CoarseDescriptionFeature(store, cfg.dim, init);
    coarse_ = MultiHeadAttention(store, "ocf.coarse", cfg.dim, cfg.heads, init);
  }
}

CrossModalFeatures OrganFusion::operator()(const OrganArray<Var>& organ_feats, const OrganArray<Var>& desc,
                                           FusionAttention* attention) const {
  CrossModalFeatures out;
  for (OrganId o : kAllOrgans) {
    const auto i = index_of(o);
    const MultiHeadAttention& mha = fine_[cfg_.share_fine ? 0 : i];
    out.fine[i] = mha(organ_feats[i], desc[i], nullptr, attention ? &attention->fine[i] : nullptr);
  }
  if (has_coarse_)
    out.coarse = coarse_(coarse_image_feature(organ_feats), coarse_desc_(desc), nullptr,
                         attention ? &attention->coarse : nullptr);
  return out;
}

}  // namespace orid
