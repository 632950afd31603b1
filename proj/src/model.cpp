#include "orid/model.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>

namespace orid {

void Toggles::validate() const {
  if (use_ocf_coarse && !use_ocf_fine)
    throw std::invalid_argument("invalid toggles: coarse fusion requires fine fusion (use_ocf_coarse => use_ocf_fine)");
  if (use_oica && !use_ocf_coarse)
    throw std::invalid_argument("invalid toggles: importance analysis requires coarse fusion (use_oica => use_ocf_coarse)");
}

Toggles Toggles::ablation_row(int row) {
  if (row < 1 || row > 5) throw std::invalid_argument("ablation row must be 1..5");
  return {row >= 2, row >= 3, row >= 4, row >= 5};
}

std::string Toggles::describe() const {
  std::string s = "BL";
  if (use_mask) s += "+mask";
  if (use_ocf_fine) s += "+ocf_fine";
  if (use_ocf_coarse) s += "+ocf_coarse";
  if (use_oica) s += "+oica";
  return s;
}

void ModelConfig::validate() const {
  vision.validate();
  if (vocab_size <= special::kCount) throw std::invalid_argument("model: vocabulary size not set");
  if (report_len < 2) throw std::invalid_argument("model: report length must be >= 2");
  for (int h : {ocf_heads, gat_heads, gen_heads})
    if (h < 1 || dim() % h != 0)
      throw std::invalid_argument("model: dim " + std::to_string(dim()) + " not divisible by " + std::to_string(h) +
                                  " heads");
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.preset = "toy";
  c.vision.image_size = 8;
  c.vision.image_channels = 1;
  c.vision.grid = 2;
  c.vision.dim = 8;
  c.vision.raw_channels = {4, 4};
  c.vision.raw_tap = 1;
  c.vision.mask_pool = 1;
  c.vision.mask_adapter = 4;
  c.vision.mask_channels = {4};
  c.ocf_heads = 2;
  c.gat_heads = 2;
  c.mlp_hidden = 8;
  c.gen_layers = 1;
  c.gen_heads = 2;
  c.ffn = 16;
  c.report_len = 8;
  return c;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::full() {
  ModelConfig c;
  c.preset = "full";
  c.vision.image_size = 224;
  c.vision.image_channels = 3;
  c.vision.grid = 7;
  c.vision.dim = 512;
  c.vision.raw_channels = {64, 128, 256, 512};
  c.vision.raw_tap = 3;
  c.vision.mask_adapter = 16;
  c.vision.mask_channels = {32, 64, 128};
  c.mlp_hidden = 512;
  c.ffn = 2048;
  c.report_len = 100;
  return c;
}

ModelConfig ModelConfig::preset_named(const std::string& name) {
  if (name == "toy") return toy();
  if (name == "desk") return desk();
  if (name == "full") return full();
  throw std::invalid_argument("unknown preset '" + name + "' (expected toy, desk or full)");
}

std::string ModelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["preset"] = preset;
  j["vision"] = {{"image_size", vision.image_size},     {"image_channels", vision.image_channels},
                 {"grid", vision.grid},                 {"dim", vision.dim},
                 {"raw_channels", vision.raw_channels}, {"raw_tap", vision.raw_tap},
                 {"mask_pool", vision.mask_pool},       {"mask_adapter", vision.mask_adapter},
                 {"mask_channels", vision.mask_channels}};
  j["ocf_heads"] = ocf_heads;
  j["share_fine_attention"] = share_fine_attention;
  j["gat_heads"] = gat_heads;
  j["gat_layers"] = gat_layers;
  j["mlp_hidden"] = mlp_hidden;
  j["gen_layers"] = gen_layers;
  j["gen_heads"] = gen_heads;
  j["ffn"] = ffn;
  j["vocab_size"] = vocab_size;
  j["report_len"] = report_len;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelConfig c;
  c.preset = j.at("preset").get<std::string>();
  const auto& v = j.at("vision");
  c.vision.image_size = v.at("image_size").get<int>();
  c.vision.image_channels = v.at("image_channels").get<int>();
  c.vision.grid = v.at("grid").get<int>();
  c.vision.dim = v.at("dim").get<int>();
  c.vision.raw_channels = v.at("raw_channels").get<std::vector<int>>();
  c.vision.raw_tap = v.at("raw_tap").get<int>();
  c.vision.mask_pool = v.at("mask_pool").get<int>();
  c.vision.mask_adapter = v.at("mask_adapter").get<int>();
  c.vision.mask_channels = v.at("mask_channels").get<std::vector<int>>();
  c.ocf_heads = j.at("ocf_heads").get<int>();
  c.share_fine_attention = j.at("share_fine_attention").get<bool>();
  c.gat_heads = j.at("gat_heads").get<int>();
  c.gat_layers = j.at("gat_layers").get<int>();
  c.mlp_hidden = j.at("mlp_hidden").get<int>();
  c.gen_layers = j.at("gen_layers").get<int>();
  c.gen_heads = j.at("gen_heads").get<int>();
  c.ffn = j.at("ffn").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.report_len = j.at("report_len").get<int>();
  return c;
}

OridModel::OridModel(const ModelConfig& cfg, const Toggles& toggles, const AdjacencyMatrix& adjacency,
                     std::uint64_t seed)
    : cfg_(cfg), toggles_(toggles), adjacency_(adjacency) {
  cfg.validate();
  toggles.validate();
  nn::Initializer init(seed);
  raw_ = RawImageExtractor(store_, cfg.vision, init);
  if (toggles.use_mask) mask_ = MaskExtractor(store_, cfg.vision, init);
  if (toggles.use_ocf_fine) {
    desc_ = DescriptionEmbedder(store_, cfg.vocab_size, cfg.dim(), init);
    fusion_ = OrganFusion(store_, {cfg.dim(), cfg.ocf_heads, cfg.share_fine_attention}, toggles.use_ocf_coarse, init);
  }
  if (toggles.use_oica) oica_ = ImportanceAnalyzer(store_, {cfg.dim(), cfg.gat_heads, cfg.gat_layers, cfg.mlp_hidden}, init);
  GeneratorConfig g;
  g.vocab_size = cfg.vocab_size;
  g.dim = cfg.dim();
  g.layers = cfg.gen_layers;
  g.heads = cfg.gen_heads;
  g.ffn = cfg.ffn;
  g.max_positions = std::max(cfg.report_len, cfg.positions());
  gen_ = ReportGenerator(store_, g, init);
}

ForwardTrace OridModel::forward(const Var& pixels, const OrganArray<Var>& mask_stacks,
                                const OrganArray<TokenSeq>& descriptions, bool record_attention) const {
  ForwardTrace t;
  t.raw = raw_(pixels);
  if (toggles_.use_mask) {
    t.mask_features = mask_(mask_stacks);
    t.organ_features = organ_image_features(t.mask_features, t.raw.mid);
  } else {
    t.organ_features.fill(t.raw.mid);
  }
  if (toggles_.use_ocf_fine) {
    t.descriptions = desc_(descriptions);
    t.cross = fusion_(t.organ_features, t.descriptions, record_attention ? &t.attention : nullptr);
  } else {
    t.cross.fine = t.organ_features;
  }
  if (alpha_override) {
    Matrix a(static_cast<Eigen::Index>(kNumOrgans), 1);
    for (std::size_t i = 0; i < kNumOrgans; ++i) a(static_cast<Eigen::Index>(i), 0) = (*alpha_override)[i];
    t.alpha = ag::constant(a);
  } else if (toggles_.use_oica) {
    t.alpha = oica_(t.cross, adjacency_, record_attention ? &t.graph_attention : nullptr);
  }
  t.final = assemble_final(t.cross, t.alpha, t.raw.final);
  t.encoded = gen_.encode(t.final.input);
  return t;
}

ForwardTrace OridModel::forward(const Sample& s, bool record_attention) const {
  if (s.image.height != cfg_.vision.image_size || s.image.width != cfg_.vision.image_size ||
      s.image.channels != cfg_.vision.image_channels)
    throw std::invalid_argument("sample " + s.id + ": expected image of shape " +
                                std::to_string(cfg_.vision.image_size) + "x" + std::to_string(cfg_.vision.image_size) +
                                "x" + std::to_string(cfg_.vision.image_channels) + ", got " +
                                std::to_string(s.image.height) + "x" + std::to_string(s.image.width) + "x" +
                                std::to_string(s.image.channels));
  OrganArray<Var> stacks;
  if (toggles_.use_mask) {
    validate_mask_bundle(s.masks);
    for (OrganId o : kAllOrgans) stacks[index_of(o)] = ag::constant(mask_to_matrix(s.masks[o]));
  }
  return forward(ag::constant(image_to_matrix(s.image)), stacks, s.descriptions, record_attention);
}

LossParts OridModel::loss(const Sample& s, double beta) const {
  const ForwardTrace t = forward(s);
  const Var logits = gen_.decode_teacher_forced(t.encoded, s.report);
  return total_loss(logits, s.report, t.encoded.pooled, gen_.target_embedding(s.report), beta);
}

Hypothesis OridModel::generate(const Sample& s, int width, std::optional<Alpha>* alpha) const {
  ag::NoGradGuard no_grad;
  const ForwardTrace t = forward(s);
  if (alpha) {
    alpha->reset();
    if (t.alpha.defined()) {
      Alpha a{};
      for (std::size_t i = 0; i < kNumOrgans; ++i) a[i] = t.alpha.value()(static_cast<Eigen::Index>(i), 0);
      *alpha = a;
    }
  }
  const EncodedImage& enc = t.encoded;
  const StepFunction step = [&](const TokenSeq& prefix) { return gen_.next_log_probs(enc, prefix); };
  return beam_search(step, cfg_.vocab_size, width, cfg_.report_len);
}

}  // namespace orid
