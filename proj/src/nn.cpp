#include "orid/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace orid::nn {

const char* group_name(ParamGroup g) {
  return g == ParamGroup::ImageExtractor ? "image_extractor" : "other";
}

Var ParamStore::add(const std::string& name, Matrix init, ParamGroup group) {
  if (find(name)) throw std::logic_error("duplicate parameter name: " + name);
  Var v = ag::parameter(std::move(init));
  entries_.push_back({name, v, group});
  return v;
}

const ParamEntry* ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

ParamEntry* ParamStore::find(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.var.value().size());
  return n;
}

Matrix Initializer::uniform(Eigen::Index rows, Eigen::Index cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng_);
  return m;
}

Matrix Initializer::xavier(Eigen::Index in, Eigen::Index out) {
  return uniform(in, out, std::sqrt(6.0 / static_cast<double>(in + out)));
}

Matrix Initializer::he(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in) {
  return uniform(rows, cols, std::sqrt(6.0 / static_cast<double>(fan_in)));
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, Initializer& init,
               ParamGroup group, bool bias)
    : w_(store.add(name + ".weight", init.xavier(in, out), group)) {
  if (bias) b_ = store.add(name + ".bias", Matrix::Zero(1, out), group);
}

Var Linear::operator()(const Var& x) const {
  Var y = ag::matmul(x, w_);
  return b_.defined() ? ag::add_row(y, b_) : y;
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, int dim, ParamGroup group)
    : gamma_(store.add(name + ".gamma", Matrix::Ones(1, dim), group)),
      beta_(store.add(name + ".beta", Matrix::Zero(1, dim), group)) {}

Embedding::Embedding(ParamStore& store, const std::string& name, int count, int dim, Initializer& init,
                     ParamGroup group)
    : table_(store.add(name + ".table", init.uniform(count, dim, 1.0 / std::sqrt(static_cast<double>(dim))),
                       group)) {}

Conv2d::Conv2d(ParamStore& store, const std::string& name, int in, int out, int kernel, int stride, int pad,
               Initializer& init, ParamGroup group)
    : in_(in), kernel_(kernel), stride_(stride), pad_(pad) {
  const int fan_in = in * kernel * kernel;
  w_ = store.add(name + ".weight", init.he(out, fan_in, fan_in), group);
  // Small nonzero biases keep rectifier inputs off the kink on blank regions.
  b_ = store.add(name + ".bias", init.uniform(out, 1, 0.05), group);
}

FeatureMap Conv2d::operator()(const FeatureMap& x) const {
  if (x.channels() != in_)
    throw std::invalid_argument("conv: expected " + std::to_string(in_) + " input channels, got " +
                                std::to_string(x.channels()));
  const int oh = ag::conv_out_size(x.height, kernel_, stride_, pad_);
  const int ow = ag::conv_out_size(x.width, kernel_, stride_, pad_);
  Var cols = (kernel_ == 1 && stride_ == 1 && pad_ == 0)
                 ? x.data
                 : ag::im2col(x.data, x.height, x.width, kernel_, stride_, pad_);
  return {ag::add_col(ag::matmul(w_, cols), b_), oh, ow};
}

}  // namespace orid::nn
