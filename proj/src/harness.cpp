#include "orid/harness.hpp"

#include "orid/array_io.hpp"
#include "orid/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace orid {

namespace fs = std::filesystem;

void RunConfig::validate() const {
  toggles.validate();
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
  if (!(lr_image > 0 && lr_other > 0)) throw std::invalid_argument("learning rates must be positive");
  if (beta < 0) throw std::invalid_argument("beta must be >= 0");
  if (clip_norm < 0) throw std::invalid_argument("clip_norm must be >= 0 (0 disables clipping)");
  if (crop_pad < 0 || flip_prob < 0 || flip_prob > 1) throw std::invalid_argument("invalid augmentation settings");
}

ModelConfig RunConfig::model_config(int vocab_size) const {
  ModelConfig m = ModelConfig::preset_named(preset);
  if (dim > 0) m.vision.dim = dim;
  if (grid > 0) m.vision.grid = grid;
  if (layers > 0) m.gen_layers = layers;
  if (heads > 0) m.ocf_heads = m.gat_heads = m.gen_heads = heads;
  if (dim > 0) {
    m.mlp_hidden = dim;
    m.ffn = 2 * dim;
  }
  m.report_len = report_len;
  m.vocab_size = vocab_size;
  m.validate();
  return m;
}

bool deterministic_from_env() {
  const char* v = std::getenv("ORID_DETERMINISTIC");
  return v && *v && std::string(v) != "0";
}

const std::vector<Sample>& PreparedData::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  return train;
}

PreparedData prepare_data(const std::vector<RawCase>& cases, const DSGraph& graph, int min_count, int report_len,
                          const Vocabulary* fixed_vocab) {
  PreparedData d;
  d.graph = graph;
  d.adjacency = build_adjacency(graph);
  if (fixed_vocab) {
    d.vocab = *fixed_vocab;
  } else {
    std::vector<std::string> texts;
    for (const auto& c : cases) {
      if (c.split != Split::Train) continue;
      texts.push_back(c.report);
      for (const auto& desc : c.descriptions) texts.push_back(desc);
    }
    if (texts.empty()) throw std::invalid_argument("dataset has no training cases");
    d.vocab = build_vocabulary(texts, min_count);
  }
  for (const auto& c : cases) {
    Sample s = encode_case(c, d.vocab, report_len);
    switch (c.split) {
      case Split::Train: d.train.push_back(std::move(s)); break;
      case Split::Val: d.val.push_back(std::move(s)); break;
      case Split::Test: d.test.push_back(std::move(s)); break;
    }
  }
  return d;
}

PreparedData load_data(const RunConfig& cfg, const Vocabulary* fixed_vocab) {
  if (cfg.data_dir.empty()) throw std::invalid_argument("data directory not set");
  const DatasetManifest m = read_manifest((fs::path(cfg.data_dir) / "manifest.jsonl").string());
  const DSGraph g = cfg.ds_graph_path.empty() ? default_ds_graph() : load_ds_graph(cfg.ds_graph_path);
  return prepare_data(load_cases(m, cfg.data_dir), g, cfg.min_count, cfg.report_len, fixed_vocab);
}

Adam::Adam(nn::ParamStore& store, double lr_image, double lr_other, double beta1, double beta2, double eps)
    : store_(store), lr_image_(lr_image), lr_other_(lr_other), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& e : store.entries()) {
    m_.push_back(Matrix::Zero(e.var.rows(), e.var.cols()));
    v_.push_back(Matrix::Zero(e.var.rows(), e.var.cols()));
  }
}

double Adam::learning_rate_of(const std::string& param_name) const {
  const auto* e = store_.find(param_name);
  if (!e) throw std::invalid_argument("unknown parameter " + param_name);
  return learning_rate(e->group);
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  auto& entries = store_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (!e.var.has_grad()) continue;
    const Matrix& g = e.var.grad();
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * g.cwiseProduct(g);
    const double lr = learning_rate(e.group);
    e.var.mutable_value().array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double clip_grad_norm(nn::ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& e : store.entries())
    if (e.var.has_grad()) sq += e.var.grad().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& e : store.entries())
      if (e.var.has_grad()) e.var.node()->grad *= s;
  }
  return norm;
}

Sample augment_sample(const Sample& s, std::mt19937_64& rng, int pad, double flip_prob) {
  std::uniform_int_distribution<int> shift(-pad, pad);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int dy = shift(rng), dx = shift(rng);
  const bool flip = unit(rng) < flip_prob;
  const int h = s.image.height, w = s.image.width;
  auto source = [&](int y, int x, int& sy, int& sx) {
    const int fx = flip ? w - 1 - x : x;
    sy = y + dy;
    sx = fx + dx;
    return sy >= 0 && sy < h && sx >= 0 && sx < w;
  };
  Sample out = s;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int sy = 0, sx = 0;
      const bool inside = source(y, x, sy, sx);
      for (int c = 0; c < s.image.channels; ++c) out.image.at(y, x, c) = inside ? s.image.at(sy, sx, c) : 0.0f;
    }
  for (OrganId o : kAllOrgans) {
    const MaskStack& src = s.masks[o];
    MaskStack& dst = out.masks[o];
    if (src.height != h || src.width != w) continue;
    for (int c = 0; c < src.channels; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          int sy = 0, sx = 0;
          dst.at(c, y, x) = source(y, x, sy, sx) ? src.at(c, sy, sx) : 0;
        }
  }
  return out;
}

LossParts mean_loss(const OridModel& model, const std::vector<Sample>& samples, double beta) {
  ag::NoGradGuard no_grad;
  LossParts out;
  double total = 0.0;
  for (const auto& s : samples) {
    const LossParts p = model.loss(s, beta);
    total += p.total.item();
    out.ce += p.ce;
    out.cs += p.cs;
  }
  const double n = std::max<double>(1.0, static_cast<double>(samples.size()));
  out.total = ag::scalar(total / n);
  out.ce /= n;
  out.cs /= n;
  return out;
}

namespace {

std::string nonfinite_report(const OridModel& model, const Sample& s, int epoch, long step, const LossParts& p) {
  std::ostringstream os;
  os << "non-finite loss at epoch " << epoch << ", step " << step << ", sample " << s.id << " (ce=" << p.ce
     << ", cs=" << p.cs << ")";
  double worst = 0.0;
  std::string worst_name;
  bool bad_param = false;
  for (const auto& e : model.params().entries()) {
    if (!e.var.value().allFinite()) {
      os << "; parameter " << e.name << " is non-finite";
      bad_param = true;
      break;
    }
    const double m = e.var.value().cwiseAbs().maxCoeff();
    if (m > worst) {
      worst = m;
      worst_name = e.name;
    }
  }
  if (!bad_param) os << "; largest parameter magnitude " << worst << " in " << worst_name;
  return os.str();
}

std::string epoch_json(const EpochLog& l) {
  nlohmann::ordered_json j = {{"epoch", l.epoch},       {"train_loss", l.train_loss}, {"train_ce", l.train_ce},
                              {"train_cs", l.train_cs}, {"val_loss", l.val_loss}};
  return j.dump();
}

}  // namespace

TrainResult train(const RunConfig& cfg, const PreparedData& data, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("train: no training samples");
  TrainResult r;
  r.model = std::make_unique<OridModel>(cfg.model_config(data.vocab.size()), cfg.toggles, data.adjacency, cfg.seed);
  OridModel& model = *r.model;
  Adam opt(model.params(), cfg.lr_image, cfg.lr_other);
  std::mt19937_64 rng(cfg.seed ^ 0x5eed0f0a11ull);
  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::string log_text;
  r.best_val_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      model.params().zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const Sample& base = data.train[order[k]];
        const Sample aug = cfg.augment ? augment_sample(base, rng, cfg.crop_pad, cfg.flip_prob) : Sample{};
        const Sample& s = cfg.augment ? aug : base;
        const LossParts p = model.loss(s, cfg.beta);
        if (!std::isfinite(p.total.item())) {
          const std::string msg = nonfinite_report(model, s, epoch, opt.steps(), p);
          if (!cfg.out_dir.empty())
            save_checkpoint((fs::path(cfg.out_dir) / "nonfinite.ckpt").string(), model, data.vocab);
          throw std::runtime_error(msg);
        }
        ag::backward(ag::scale(p.total, 1.0 / static_cast<double>(end - start)));
        log.train_loss += p.total.item();
        log.train_ce += p.ce;
        log.train_cs += p.cs;
      }
      clip_grad_norm(model.params(), cfg.clip_norm);
      opt.step();
    }
    const double n = static_cast<double>(order.size());
    log.train_loss /= n;
    log.train_ce /= n;
    log.train_cs /= n;
    // Without a validation split the epoch's training loss stands in.
    log.val_loss = data.val.empty() ? log.train_loss : mean_loss(model, data.val, cfg.beta).total.item();
    r.log.push_back(log);
    if (log.val_loss < r.best_val_loss) {
      r.best_val_loss = log.val_loss;
      r.best_epoch = epoch;
      r.best_checkpoint = encode_checkpoint(model, data.vocab, "{\"epoch\":" + std::to_string(epoch) + "}");
      if (!cfg.out_dir.empty()) io::write_file((fs::path(cfg.out_dir) / "best.ckpt").string(), r.best_checkpoint);
    }
    log_text += epoch_json(log) + "\n";
    if (cfg.verbose)
      std::fprintf(stderr, "epoch %d  train %.5f (ce %.5f cs %.5f)  val %.5f\n", epoch, log.train_loss, log.train_ce,
                   log.train_cs, log.val_loss);
    if (on_epoch && on_epoch(log, model)) break;
  }
  if (r.best_checkpoint.empty()) r.best_checkpoint = encode_checkpoint(model, data.vocab, "{\"epoch\":0}");
  if (!cfg.out_dir.empty()) {
    save_checkpoint((fs::path(cfg.out_dir) / "last.ckpt").string(), model, data.vocab,
                    "{\"epoch\":" + std::to_string(r.log.size()) + "}");
    io::write_file((fs::path(cfg.out_dir) / "train_log.jsonl").string(), log_text);
  }
  return r;
}

std::string EvalTranscript::to_json() const {
  nlohmann::ordered_json j;
  j["split"] = split;
  j["toggles"] = toggles;
  j["metrics"] = nlohmann::ordered_json::parse(table.to_json());
  nlohmann::ordered_json rows_j = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row = {{"id", r.id}, {"generated", r.generated}, {"reference", r.reference}};
    if (r.alpha) {
      nlohmann::ordered_json a = nlohmann::ordered_json::object();
      for (OrganId o : kAllOrgans) a[std::string(organ_name(o))] = (*r.alpha)[index_of(o)];
      row["alpha"] = a;
    }
    rows_j.push_back(row);
  }
  j["samples"] = rows_j;
  return j.dump(2);
}

EvalTranscript evaluate(const OridModel& model, const Vocabulary& vocab, const std::vector<Sample>& samples,
                        int beam_width, const std::string& split_name) {
  if (vocab.size() != model.config().vocab_size)
    throw std::invalid_argument("evaluate: vocabulary size does not match the model");
  if (samples.empty()) throw std::invalid_argument("evaluate: split " + split_name + " is empty");
  EvalTranscript t;
  t.split = split_name;
  t.toggles = model.toggles().describe();
  std::vector<std::string> preds, refs;
  for (const auto& s : samples) {
    TranscriptRow row;
    row.id = s.id;
    row.generated = detokenize(model.generate(s, beam_width, &row.alpha).tokens, vocab);
    row.reference = detokenize(s.report, vocab);
    preds.push_back(row.generated);
    refs.push_back(row.reference);
    t.rows.push_back(std::move(row));
  }
  t.table = metrics::score_corpus(preds, refs);
  return t;
}

EvalTranscript evaluate_checkpoint(const std::string& checkpoint_path, const RunConfig& cfg, Split split) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint_path);
  const PreparedData data = load_data(cfg);
  if (!(data.vocab == ck.vocab))
    throw std::runtime_error("vocabulary mismatch between checkpoint (" + std::to_string(ck.vocab.size()) +
                             " tokens) and dataset (" + std::to_string(data.vocab.size()) + " tokens)");
  return evaluate(*ck.model, ck.vocab, data.split(split), cfg.beam_width, split_name(split));
}

std::vector<AblationRow> ablate(const RunConfig& base, const PreparedData& data, Split eval_split) {
  std::vector<AblationRow> rows;
  for (int k = 1; k <= 5; ++k) {
    RunConfig cfg = base;
    cfg.toggles = Toggles::ablation_row(k);
    if (!base.out_dir.empty()) cfg.out_dir = (fs::path(base.out_dir) / ("row" + std::to_string(k))).string();
    TrainResult tr = train(cfg, data);
    AblationRow row;
    row.row = k;
    row.toggles = cfg.toggles;
    row.log = tr.log;
    const LoadedCheckpoint best = decode_checkpoint(tr.best_checkpoint);
    row.transcript = evaluate(*best.model, data.vocab, data.split(eval_split), cfg.beam_width, split_name(eval_split));
    if (!cfg.out_dir.empty()) io::write_file((fs::path(cfg.out_dir) / "transcript.json").string(), row.transcript.to_json());
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "row  modules                         ";
  char buf[96];
  if (!rows.empty())
    for (const auto& [name, v] : rows.front().transcript.table.nlg_columns()) {
      std::snprintf(buf, sizeof buf, "%-9s", name.c_str());
      out += buf;
    }
  out += "\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "#%-3d %-32s", r.row, r.toggles.describe().c_str());
    out += buf;
    for (const auto& [name, v] : r.transcript.table.nlg_columns()) {
      std::snprintf(buf, sizeof buf, "%-9.4f", v);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace orid
