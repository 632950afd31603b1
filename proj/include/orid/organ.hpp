#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace orid {

// The five organ regions. Every per-organ container iterates in this order.
enum class OrganId : int { Lung = 0, Heart = 1, Bone = 2, Pleural = 3, Mediastinum = 4 };

inline constexpr std::size_t kNumOrgans = 5;

// Graph nodes are the five organs followed by the coarse ("total") node.
inline constexpr std::size_t kNumGraphNodes = kNumOrgans + 1;
inline constexpr std::size_t kTotalNode = kNumOrgans;

inline constexpr std::array<OrganId, kNumOrgans> kAllOrgans = {
    OrganId::Lung, OrganId::Heart, OrganId::Bone, OrganId::Pleural, OrganId::Mediastinum};

template <class T>
using OrganArray = std::array<T, kNumOrgans>;

constexpr std::size_t index_of(OrganId o) { return static_cast<std::size_t>(o); }

constexpr std::string_view organ_name(OrganId o) {
  switch (o) {
    case OrganId::Lung: return "lung";
    case OrganId::Heart: return "heart";
    case OrganId::Bone: return "bone";
    case OrganId::Pleural: return "pleural";
    case OrganId::Mediastinum: return "mediastinum";
  }
  return "?";
}

inline std::optional<OrganId> parse_organ(std::string_view name) {
  for (OrganId o : kAllOrgans)
    if (organ_name(o) == name) return o;
  return std::nullopt;
}

// Channel count of each organ's segmentation-mask stack.
inline constexpr OrganArray<int> kMaskChannels = {15, 6, 70, 10, 9};

// Fixed token length of each organ's diagnosis description.
inline constexpr OrganArray<int> kDescLengths = {53, 39, 48, 43, 41};

inline constexpr int kTotalDescLength = 53 + 39 + 48 + 43 + 41;
static_assert(kTotalDescLength == 224);

constexpr int mask_channels(OrganId o) { return kMaskChannels[index_of(o)]; }
constexpr int desc_length(OrganId o) { return kDescLengths[index_of(o)]; }

// Row offset of an organ's span inside the concatenated description matrix.
constexpr int desc_offset(OrganId o) {
  int off = 0;
  for (std::size_t i = 0; i < index_of(o); ++i) off += kDescLengths[i];
  return off;
}

}  // namespace orid
