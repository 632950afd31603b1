#include "orid/checkpoint.hpp"

#include "orid/array_io.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <stdexcept>

namespace orid {

namespace {

constexpr char kMagic[8] = {'O', 'R', 'I', 'D', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw std::runtime_error("checkpoint: truncated file");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string toggles_json(const Toggles& t) {
  nlohmann::ordered_json j = {{"use_mask", t.use_mask},
                              {"use_ocf_fine", t.use_ocf_fine},
                              {"use_ocf_coarse", t.use_ocf_coarse},
                              {"use_oica", t.use_oica}};
  return j.dump();
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::uint64_t config_hash(const ModelConfig& cfg, const Toggles& toggles) {
  return fnv1a(cfg.to_json() + toggles_json(toggles));
}

std::string encode_checkpoint(const OridModel& model, const Vocabulary& vocab, const std::string& extra) {
  if (vocab.size() != model.config().vocab_size)
    throw std::invalid_argument("checkpoint: vocabulary size does not match the model");
  nlohmann::ordered_json h;
  h["config"] = nlohmann::ordered_json::parse(model.config().to_json());
  h["toggles"] = nlohmann::ordered_json::parse(toggles_json(model.toggles()));
  h["config_hash"] = config_hash(model.config(), model.toggles());
  h["vocab"] = vocab.words();
  std::vector<std::vector<double>> adj;
  for (Eigen::Index i = 0; i < model.adjacency().rows(); ++i) {
    adj.emplace_back();
    for (Eigen::Index j = 0; j < model.adjacency().cols(); ++j) adj.back().push_back(model.adjacency()(i, j));
  }
  h["adjacency"] = adj;
  nlohmann::ordered_json params = nlohmann::ordered_json::array();
  for (const auto& e : model.params().entries())
    params.push_back({{"name", e.name}, {"rows", e.var.rows()}, {"cols", e.var.cols()}, {"group", nn::group_name(e.group)}});
  h["params"] = params;
  h["extra"] = nlohmann::ordered_json::parse(extra);
  const std::string header = h.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header.size());
  out += header;
  for (const auto& e : model.params().entries()) {
    const Matrix& m = e.var.value();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(out, m(i, j));
  }
  return out;
}

LoadedCheckpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  std::size_t pos = sizeof kMagic;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  const auto header_len = take<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) throw std::runtime_error("checkpoint: truncated header");
  const auto h = nlohmann::json::parse(bytes.substr(pos, header_len));
  pos += header_len;

  const ModelConfig cfg = ModelConfig::from_json(h.at("config").dump());
  Toggles t;
  t.use_mask = h.at("toggles").at("use_mask").get<bool>();
  t.use_ocf_fine = h.at("toggles").at("use_ocf_fine").get<bool>();
  t.use_ocf_coarse = h.at("toggles").at("use_ocf_coarse").get<bool>();
  t.use_oica = h.at("toggles").at("use_oica").get<bool>();
  const auto stored_hash = h.at("config_hash").get<std::uint64_t>();
  if (stored_hash != config_hash(cfg, t)) throw std::runtime_error("checkpoint: config hash mismatch");
  AdjacencyMatrix adj;
  const auto rows = h.at("adjacency").get<std::vector<std::vector<double>>>();
  if (rows.size() != kNumGraphNodes) throw std::runtime_error("checkpoint: adjacency must be 6x6");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != kNumGraphNodes) throw std::runtime_error("checkpoint: adjacency must be 6x6");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      adj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }

  LoadedCheckpoint out;
  out.vocab = Vocabulary(h.at("vocab").get<std::vector<std::string>>());
  out.hash = stored_hash;
  out.extra = h.contains("extra") ? h.at("extra").dump() : "{}";
  out.model = std::make_unique<OridModel>(cfg, t, adj, 0);
  auto& entries = out.model->params().entries();
  const auto& stored = h.at("params");
  if (stored.size() != entries.size()) throw std::runtime_error("checkpoint: parameter count mismatch");
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& e = entries[k];
    if (stored[k].at("name").get<std::string>() != e.name || stored[k].at("rows").get<Eigen::Index>() != e.var.rows() ||
        stored[k].at("cols").get<Eigen::Index>() != e.var.cols())
      throw std::runtime_error("checkpoint: parameter " + e.name + " does not match the stored layout");
    Matrix& m = e.var.mutable_value();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = take<double>(bytes, pos);
  }
  if (pos != bytes.size()) throw std::runtime_error("checkpoint: trailing bytes");
  if (out.vocab.size() != cfg.vocab_size) throw std::runtime_error("checkpoint: vocabulary size mismatch");
  return out;
}

void save_checkpoint(const std::string& path, const OridModel& model, const Vocabulary& vocab,
                     const std::string& extra) {
  io::write_file(path, encode_checkpoint(model, vocab, extra));
}

LoadedCheckpoint load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace orid
