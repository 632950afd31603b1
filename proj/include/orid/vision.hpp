#pragma once

#include "orid/imaging.hpp"
#include "orid/nn.hpp"
#include "orid/organ.hpp"

#include <vector>

namespace orid {

using ag::Matrix;
using ag::Var;

struct VisionConfig {
  int image_size = 64;
  int image_channels = 1;
  int grid = 4;  // feature grids have grid*grid positions
  int dim = 32;
  std::vector<int> raw_channels = {8, 16, 32};  // one stride-2 block each
  int raw_tap = 2;                              // mid feature taps the output of this many blocks
  int mask_pool = 2;                            // masks are average-pooled by this factor first
  int mask_adapter = 8;                         // width of the per-organ 1x1 input adapters
  std::vector<int> mask_channels = {8, 16};

  int positions() const { return grid * grid; }
  void validate() const;
  bool operator==(const VisionConfig&) const = default;
};

// Pixel data as a channels x (height*width) matrix.
Matrix image_to_matrix(const Image& img);
Matrix mask_to_matrix(const MaskStack& m);

// (height*width) x (grid*grid) averaging matrix; right-multiplying a map by it
// gives the adaptive average pool.
Matrix adaptive_pool_matrix(int height, int width, int grid);

// Raw-image backbone with a mid-layer tap. Both taps are pooled to the grid
// and projected to dim.
class RawImageExtractor {
 public:
  struct Output {
    Var mid;
    Var final;
  };

  RawImageExtractor() = default;
  RawImageExtractor(nn::ParamStore& store, const VisionConfig& cfg, nn::Initializer& init);

  Output operator()(const Var& pixels) const;  // pixels: channels x (size*size)
  Output extract(const Image& img) const;

 private:
  VisionConfig cfg_;
  std::vector<nn::Conv2d> blocks_;
  nn::Linear mid_proj_, final_proj_;
  Matrix mid_pool_, final_pool_;
};

// Mask backbone: organ-specific 1x1 adapters feed one shared conv stack.
class MaskExtractor {
 public:
  MaskExtractor() = default;
  MaskExtractor(nn::ParamStore& store, const VisionConfig& cfg, nn::Initializer& init);

  OrganArray<Var> operator()(const OrganArray<Var>& stacks) const;
  OrganArray<Var> extract(const MaskBundle& masks) const;

 private:
  VisionConfig cfg_;
  OrganArray<nn::Conv2d> adapters_;
  std::vector<nn::Conv2d> blocks_;
  nn::Linear proj_;
  Matrix pool_;
};

// x^I_o = mask_o (elementwise) raw_mid, per organ.
OrganArray<Var> organ_image_features(const OrganArray<Var>& mask_feats, const Var& raw_mid);

}  // namespace orid
