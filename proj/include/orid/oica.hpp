#pragma once

#include "orid/nn.hpp"
#include "orid/ocf.hpp"

#include <optional>
#include <vector>

namespace orid {

// Six node rows (five organs, then the total node), each the positionwise
// mean of the matching grid. Requires the coarse grid.
Var pool_nodes(const CrossModalFeatures& cm);

// Graph attention over a fixed adjacency. Node v attends to {u : adj(v,u) != 0};
// each head transforms, attends and aggregates, the heads are concatenated,
// a bias is added and ELU applied.
class GatLayer {
 public:
  GatLayer() = default;
  GatLayer(nn::ParamStore& store, const std::string& name, int dim, int heads, nn::Initializer& init);

  Var operator()(const Var& nodes, const Matrix& adjacency, std::vector<Matrix>* weights = nullptr) const;

  int heads() const { return static_cast<int>(w_.size()); }
  Var& weight(int h) { return w_[static_cast<std::size_t>(h)]; }    // dim x dim/heads
  Var& att_dst(int h) { return a_dst_[static_cast<std::size_t>(h)]; }  // dim/heads x 1, scores the attending node
  Var& att_src(int h) { return a_src_[static_cast<std::size_t>(h)]; }  // dim/heads x 1, scores the neighbour
  Var& bias() { return bias_; }

 private:
  std::vector<Var> w_, a_dst_, a_src_;
  Var bias_;  // 1 x dim
};

// Shared two-layer perceptron on the organ nodes, squashed to (0, 1).
class ImportanceHead {
 public:
  ImportanceHead() = default;
  ImportanceHead(nn::ParamStore& store, int dim, int hidden, nn::Initializer& init);

  Var operator()(const Var& nodes) const;  // 5 x 1

  nn::Linear& hidden_layer() { return l1_; }
  nn::Linear& output_layer() { return l2_; }

 private:
  nn::Linear l1_, l2_;
};

struct OicaConfig {
  int dim = 32;
  int heads = 8;
  int layers = 2;
  int hidden = 32;
};

class ImportanceAnalyzer {
 public:
  ImportanceAnalyzer() = default;
  ImportanceAnalyzer(nn::ParamStore& store, const OicaConfig& cfg, nn::Initializer& init);

  // alpha for the five organs (5 x 1).
  Var operator()(const CrossModalFeatures& cm, const Matrix& adjacency,
                 std::vector<std::vector<Matrix>>* weights = nullptr) const;

  GatLayer& layer(int k) { return layers_[static_cast<std::size_t>(k)]; }
  ImportanceHead& head() { return head_; }

 private:
  std::vector<GatLayer> layers_;
  ImportanceHead head_;
};

struct FinalFeatures {
  Var fused;  // x^C_F
  Var input;  // x_I
};

// x^C_F = x^C_T + sum_o alpha_o x^C_o, accumulated in canonical order starting
// from x^C_T; x_I = x^C_F + raw_final. An undefined coarse grid contributes
// nothing and an undefined alpha means every alpha_o is exactly 1.
FinalFeatures assemble_final(const CrossModalFeatures& cm, const Var& alpha, const Var& raw_final);

}  // namespace orid
