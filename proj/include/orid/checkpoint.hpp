#pragma once

#include "orid/corpus.hpp"
#include "orid/model.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace orid {

// File layout: "ORIDCKPT", u32 format version, u64 header length, a JSON
// header, then every parameter as little-endian f64 in header order
// (row-major within a tensor).
inline constexpr std::uint32_t kCheckpointVersion = 1;

// FNV-1a 64 of the canonical config and toggle JSON.
std::uint64_t config_hash(const ModelConfig& cfg, const Toggles& toggles);

struct LoadedCheckpoint {
  std::unique_ptr<OridModel> model;
  Vocabulary vocab;
  std::uint64_t hash = 0;
  std::string extra;  // free-form JSON stored by the writer
};

std::string encode_checkpoint(const OridModel& model, const Vocabulary& vocab, const std::string& extra = "{}");
LoadedCheckpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const OridModel& model, const Vocabulary& vocab,
                     const std::string& extra = "{}");
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace orid
