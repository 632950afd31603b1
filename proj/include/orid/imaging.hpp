#pragma once

#include "orid/organ.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace orid {

// Height x width x channels, row-major with channels innermost, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, int c) : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, 0.0f) {}

  float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  bool operator==(const Image&) const = default;
};

// Binary masks of one organ: channels x height x width.
struct MaskStack {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  MaskStack() = default;
  MaskStack(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0) {}

  std::uint8_t& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  std::uint8_t at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  bool operator==(const MaskStack&) const = default;
};

struct MaskBundle {
  OrganArray<MaskStack> stacks;
  // Set when segmentation output was unavailable and zero channels were substituted.
  bool missing = false;

  static MaskBundle zeros(int height, int width) {
    MaskBundle b;
    for (OrganId o : kAllOrgans) b.stacks[index_of(o)] = MaskStack(mask_channels(o), height, width);
    b.missing = true;
    return b;
  }

  const MaskStack& operator[](OrganId o) const { return stacks[index_of(o)]; }
  MaskStack& operator[](OrganId o) { return stacks[index_of(o)]; }
  bool operator==(const MaskBundle& other) const { return stacks == other.stacks; }
};

// Throws when any organ's channel count deviates from the fixed counts.
inline void validate_mask_bundle(const MaskBundle& b) {
  for (OrganId o : kAllOrgans) {
    const MaskStack& s = b[o];
    if (s.channels != mask_channels(o))
      throw std::invalid_argument("mask stack for " + std::string(organ_name(o)) + " has " +
                                  std::to_string(s.channels) + " channels, expected " +
                                  std::to_string(mask_channels(o)));
    if (s.data.size() != static_cast<std::size_t>(s.channels) * s.height * s.width)
      throw std::invalid_argument("mask stack for " + std::string(organ_name(o)) + " has inconsistent size");
  }
}

}  // namespace orid
