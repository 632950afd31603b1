#pragma once

#include "orid/autograd.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace orid::nn {

using ag::Matrix;
using ag::Var;

// Optimizer parameter groups; they train at different learning rates.
enum class ParamGroup { ImageExtractor, Other };

const char* group_name(ParamGroup g);

struct ParamEntry {
  std::string name;
  Var var;
  ParamGroup group;
};

// Flat, insertion-ordered registry of every trainable tensor in a model.
class ParamStore {
 public:
  Var add(const std::string& name, Matrix init, ParamGroup group);
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }
  const ParamEntry* find(const std::string& name) const;
  ParamEntry* find(const std::string& name);
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<ParamEntry> entries_;
};

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound);
  // Glorot-uniform for an in x out weight.
  Matrix xavier(Eigen::Index in, Eigen::Index out);
  // He-uniform with an explicit fan-in, for rectified layers.
  Matrix he(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in);

 private:
  std::mt19937_64 rng_;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, Initializer& init,
         ParamGroup group = ParamGroup::Other, bool bias = true);
  Var operator()(const Var& x) const;
  const Var& weight() const { return w_; }
  const Var& bias() const { return b_; }

 private:
  Var w_;  // in x out
  Var b_;  // 1 x out, undefined when bias-free
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, int dim, ParamGroup group = ParamGroup::Other);
  Var operator()(const Var& x) const { return ag::layer_norm_rows(x, gamma_, beta_); }

 private:
  Var gamma_, beta_;
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(ParamStore& store, const std::string& name, int count, int dim, Initializer& init,
            ParamGroup group = ParamGroup::Other);
  Var operator()(std::span<const int> ids) const { return ag::gather_rows(table_, ids); }
  const Var& table() const { return table_; }

 private:
  Var table_;
};

// A channels x (height*width) activation map.
struct FeatureMap {
  Var data;
  int height = 0;
  int width = 0;
  int channels() const { return static_cast<int>(data.rows()); }
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int in, int out, int kernel, int stride, int pad,
         Initializer& init, ParamGroup group);
  FeatureMap operator()(const FeatureMap& x) const;
  int in_channels() const { return in_; }

 private:
  Var w_;  // out x (in*k*k)
  Var b_;  // out x 1
  int in_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
};

}  // namespace orid::nn
