#include "orid/oica.hpp"

#include <limits>
#include <stdexcept>
#include <string>

namespace orid {

namespace {

void require_shape(const Var& a, const Var& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": grid shapes differ (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

}  // namespace

Var pool_nodes(const CrossModalFeatures& cm) {
  if (!cm.coarse.defined()) throw std::invalid_argument("pool_nodes: coarse feature required");
  std::vector<Var> rows;
  for (OrganId o : kAllOrgans) rows.push_back(ag::mean_rows(cm.fine[index_of(o)]));
  rows.push_back(ag::mean_rows(cm.coarse));
  return ag::concat_rows(rows);
}

GatLayer::GatLayer(nn::ParamStore& store, const std::string& name, int dim, int heads, nn::Initializer& init) {
  if (heads < 1 || dim % heads != 0)
    throw std::invalid_argument("graph attention: dim " + std::to_string(dim) + " is not divisible by " +
                                std::to_string(heads) + " heads");
  const int dh = dim / heads;
  for (int h = 0; h < heads; ++h) {
    const std::string p = name + ".head" + std::to_string(h);
    w_.push_back(store.add(p + ".weight", init.xavier(dim, dh), nn::ParamGroup::Other));
    a_dst_.push_back(store.add(p + ".att_dst", init.xavier(dh, 1), nn::ParamGroup::Other));
    a_src_.push_back(store.add(p + ".att_src", init.xavier(dh, 1), nn::ParamGroup::Other));
  }
  bias_ = store.add(name + ".bias", Matrix::Zero(1, dim), nn::ParamGroup::Other);
}

Var GatLayer::operator()(const Var& nodes, const Matrix& adjacency, std::vector<Matrix>* weights) const {
  const Eigen::Index n = nodes.rows();
  if (adjacency.rows() != n || adjacency.cols() != n)
    throw std::invalid_argument("graph attention: adjacency must be " + std::to_string(n) + "x" + std::to_string(n));
  if (nodes.cols() != w_.front().rows())
    throw std::invalid_argument("graph attention: node width " + std::to_string(nodes.cols()) + ", expected " +
                                std::to_string(w_.front().rows()));
  Matrix mask(n, n);
  for (Eigen::Index v = 0; v < n; ++v) {
    bool any = false;
    for (Eigen::Index u = 0; u < n; ++u) {
      const bool edge = adjacency(v, u) != 0.0;
      mask(v, u) = edge ? 0.0 : -std::numeric_limits<double>::infinity();
      any = any || edge;
    }
    if (!any) throw std::invalid_argument("graph attention: node " + std::to_string(v) + " has no neighbours");
  }
  if (weights) weights->clear();
  std::vector<Var> outs;
  for (std::size_t h = 0; h < w_.size(); ++h) {
    const Var z = ag::matmul(nodes, w_[h]);
    const Var logits = ag::leaky_relu(
        ag::outer_sum(ag::matmul(z, a_dst_[h]), ag::transpose(ag::matmul(z, a_src_[h]))), 0.2);
    const Var att = ag::softmax_rows(logits, &mask);
    if (weights) weights->push_back(att.value());
    outs.push_back(ag::matmul(att, z));
  }
  const Var cat = outs.size() == 1 ? outs.front() : ag::concat_cols(outs);
  return ag::elu(ag::add_row(cat, bias_));
}

ImportanceHead::ImportanceHead(nn::ParamStore& store, int dim, int hidden, nn::Initializer& init)
    : l1_(store, "oica.mlp.hidden", dim, hidden, init), l2_(store, "oica.mlp.out", hidden, 1, init) {}

Var ImportanceHead::operator()(const Var& nodes) const {
  const Var organs = ag::slice_rows(nodes, 0, static_cast<Eigen::Index>(kNumOrgans));
  return ag::sigmoid(l2_(ag::tanh(l1_(organs))));
}

ImportanceAnalyzer::ImportanceAnalyzer(nn::ParamStore& store, const OicaConfig& cfg, nn::Initializer& init) {
  if (cfg.layers < 1) throw std::invalid_argument("importance analysis: need at least one graph layer");
  for (int k = 0; k < cfg.layers; ++k)
    layers_.emplace_back(store, "oica.gat" + std::to_string(k), cfg.dim, cfg.heads, init);
  head_ = ImportanceHead(store, cfg.dim, cfg.hidden, init);
}

Var ImportanceAnalyzer::operator()(const CrossModalFeatures& cm, const Matrix& adjacency,
                                   std::vector<std::vector<Matrix>>* weights) const {
  Var h = pool_nodes(cm);
  if (weights) weights->assign(layers_.size(), {});
  for (std::size_t k = 0; k < layers_.size(); ++k) h = layers_[k](h, adjacency, weights ? &(*weights)[k] : nullptr);
  return head_(h);
}

FinalFeatures assemble_final(const CrossModalFeatures& cm, const Var& alpha, const Var& raw_final) {
  if (alpha.defined() && (alpha.rows() != static_cast<Eigen::Index>(kNumOrgans) || alpha.cols() != 1))
    throw std::invalid_argument("assemble_final: alpha must hold 5 coefficients");
  Var acc = cm.coarse;
  for (OrganId o : kAllOrgans) {
    const Var& x = cm.fine[index_of(o)];
    const Var term = alpha.defined() ? ag::scale_by(ag::slice_rows(alpha, static_cast<Eigen::Index>(index_of(o)), 1), x) : x;
    if (acc.defined()) {
      require_shape(acc, x, "assemble_final");
      acc = ag::add(acc, term);
    } else {
      acc = term;
    }
  }
  require_shape(acc, raw_final, "assemble_final");
  return {acc, ag::add(acc, raw_final)};
}

}  // namespace orid
