#include "orid/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace orid {

Matrix sinusoid_positions(int rows, int dim) {
  Matrix m(rows, dim);
  for (int p = 0; p < rows; ++p)
    for (int i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      m(p, i) = i % 2 == 0 ? std::sin(p * freq) : std::cos(p * freq);
    }
  return m;
}

ReportGenerator::ReportGenerator(nn::ParamStore& store, const GeneratorConfig& cfg, nn::Initializer& init)
    : cfg_(cfg) {
  if (cfg.vocab_size <= special::kCount) throw std::invalid_argument("generator: vocabulary too small");
  if (cfg.layers < 1) throw std::invalid_argument("generator: need at least one layer");
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "gen.enc" + std::to_string(l);
    enc_.push_back({nn::LayerNorm(store, p + ".ln1", cfg.dim), nn::LayerNorm(store, p + ".ln2", cfg.dim),
                    MultiHeadAttention(store, p + ".attn", cfg.dim, cfg.heads, init),
                    nn::Linear(store, p + ".ff1", cfg.dim, cfg.ffn, init),
                    nn::Linear(store, p + ".ff2", cfg.ffn, cfg.dim, init)});
  }
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "gen.dec" + std::to_string(l);
    dec_.push_back({nn::LayerNorm(store, p + ".ln1", cfg.dim), nn::LayerNorm(store, p + ".ln2", cfg.dim),
                    nn::LayerNorm(store, p + ".ln3", cfg.dim),
                    MultiHeadAttention(store, p + ".self_attn", cfg.dim, cfg.heads, init),
                    MultiHeadAttention(store, p + ".cross_attn", cfg.dim, cfg.heads, init),
                    nn::Linear(store, p + ".ff1", cfg.dim, cfg.ffn, init),
                    nn::Linear(store, p + ".ff2", cfg.ffn, cfg.dim, init)});
  }
  enc_norm_ = nn::LayerNorm(store, "gen.enc_norm", cfg.dim);
  dec_norm_ = nn::LayerNorm(store, "gen.dec_norm", cfg.dim);
  embed_ = nn::Embedding(store, "gen.embedding", cfg.vocab_size, cfg.dim, init);
  out_ = nn::Linear(store, "gen.out", cfg.dim, cfg.vocab_size, init);
  positions_ = sinusoid_positions(cfg.max_positions, cfg.dim);
}

EncodedImage ReportGenerator::encode(const Var& x_input) const {
  if (x_input.cols() != cfg_.dim) throw std::invalid_argument("encoder: input width must be " + std::to_string(cfg_.dim));
  if (x_input.rows() > cfg_.max_positions) throw std::invalid_argument("encoder: too many positions");
  Var x = ag::add(x_input, ag::constant(positions_.topRows(x_input.rows())));
  for (const auto& l : enc_) {
    const Var h = l.ln1(x);
    x = ag::add(x, l.attn(h, h));
    x = ag::add(x, l.ff2(ag::relu(l.ff1(l.ln2(x)))));
  }
  EncodedImage e;
  e.states = enc_norm_(x);
  e.pooled = ag::mean_rows(e.states);
  return e;
}

Var ReportGenerator::decode(const EncodedImage& enc, std::span<const int> prefix) const {
  if (prefix.empty() || prefix.front() != special::kBos) throw std::invalid_argument("decoder: target must begin with BOS");
  const auto t = static_cast<Eigen::Index>(prefix.size());
  if (t > cfg_.max_positions) throw std::invalid_argument("decoder: sequence longer than the position table");
  Matrix causal = Matrix::Zero(t, t);
  for (Eigen::Index i = 0; i < t; ++i)
    for (Eigen::Index j = i + 1; j < t; ++j) causal(i, j) = -std::numeric_limits<double>::infinity();
  Var x = ag::add(embed_(prefix), ag::constant(positions_.topRows(t)));
  for (const auto& l : dec_) {
    const Var h = l.ln1(x);
    x = ag::add(x, l.self_attn(h, h, &causal));
    x = ag::add(x, l.cross_attn(l.ln2(x), enc.states));
    x = ag::add(x, l.ff2(ag::relu(l.ff1(l.ln3(x)))));
  }
  return out_(dec_norm_(x));
}

Var ReportGenerator::decode_teacher_forced(const EncodedImage& enc, const TokenSeq& target) const {
  const int n = content_length(target);
  return decode(enc, std::span<const int>(target.data(), static_cast<std::size_t>(std::max(n, 1))));
}

Var ReportGenerator::target_embedding(const TokenSeq& target) const {
  std::vector<int> ids;
  for (int id : target)
    if (id != special::kPad) ids.push_back(id);
  if (ids.empty()) throw std::invalid_argument("target embedding: empty target");
  return ag::mean_rows(embed_(ids));
}

std::vector<double> ReportGenerator::next_log_probs(const EncodedImage& enc, const TokenSeq& prefix) const {
  const Var logits = decode(enc, prefix);
  const Eigen::RowVectorXd row = logits.value().row(logits.rows() - 1);
  const double mx = row.maxCoeff();
  const double lse = mx + std::log((row.array() - mx).exp().sum());
  std::vector<double> out(static_cast<std::size_t>(row.size()));
  for (Eigen::Index i = 0; i < row.size(); ++i) out[static_cast<std::size_t>(i)] = row(i) - lse;
  return out;
}

Var consistency_loss(const Var& pooled_image, const Var& target_embedding) {
  if (pooled_image.value().norm() == 0.0 || target_embedding.value().norm() == 0.0)
    throw std::domain_error("degenerate embedding");
  return ag::add(ag::scalar(1.0), ag::scale(ag::cosine_similarity(pooled_image, target_embedding), -1.0));
}

std::vector<int> shifted_targets(const TokenSeq& target, Eigen::Index rows) {
  std::vector<int> out(static_cast<std::size_t>(rows), -1);
  for (std::size_t t = 0; t < out.size(); ++t)
    if (t + 1 < target.size() && target[t + 1] != special::kPad) out[t] = target[t + 1];
  return out;
}

LossParts total_loss(const Var& logits, const TokenSeq& target, const Var& pooled_image,
                     const Var& target_embedding, double beta) {
  const auto targets = shifted_targets(target, logits.rows());
  const Var ce = ag::cross_entropy(logits, targets);
  const Var cs = consistency_loss(pooled_image, target_embedding);
  LossParts out;
  out.ce = ce.item();
  out.cs = cs.item();
  out.total = ag::add(ce, ag::scale(cs, beta));
  return out;
}

namespace {

struct Beam {
  TokenSeq tokens;
  double log_prob = 0.0;
  long age = 0;
};

struct Candidate {
  double score;
  int token;
  long parent_age;
  std::size_t parent;
  double log_prob;
};

void check_decode_args(int vocab_size, int width, int max_len) {
  if (width < 1) throw std::invalid_argument("beam search: width must be >= 1");
  if (max_len < 2) throw std::invalid_argument("beam search: max_len must be >= 2");
  if (vocab_size <= special::kEos) throw std::invalid_argument("beam search: vocabulary too small");
}

std::vector<double> checked_step(const StepFunction& step, const TokenSeq& prefix, int vocab_size) {
  auto lp = step(prefix);
  if (static_cast<int>(lp.size()) != vocab_size) throw std::invalid_argument("beam search: step returned wrong width");
  return lp;
}

}  // namespace

Hypothesis beam_search(const StepFunction& step, int vocab_size, int width, int max_len) {
  check_decode_args(vocab_size, width, max_len);
  long next_age = 0;
  std::vector<Beam> beams{{{special::kBos}, 0.0, next_age++}};
  std::vector<Hypothesis> finished;
  while (!beams.empty()) {
    std::vector<Candidate> cands;
    const double generated = static_cast<double>(beams.front().tokens.size());  // all beams share a length
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const auto lp = checked_step(step, beams[b].tokens, vocab_size);
      for (int v = special::kEos; v < vocab_size; ++v) {
        const double total = beams[b].log_prob + lp[static_cast<std::size_t>(v)];
        cands.push_back({total / generated, v, beams[b].age, b, total});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.parent_age < b.parent_age;
    });
    if (cands.size() > static_cast<std::size_t>(width)) cands.resize(static_cast<std::size_t>(width));
    std::vector<Beam> next;
    for (const auto& c : cands) {
      TokenSeq tokens = beams[c.parent].tokens;
      tokens.push_back(c.token);
      if (c.token == special::kEos || static_cast<int>(tokens.size()) >= max_len)
        finished.push_back({std::move(tokens), c.log_prob, c.score});
      else
        next.push_back({std::move(tokens), c.log_prob, next_age++});
    }
    beams = std::move(next);
  }
  // Earlier-finished hypotheses win exact ties.
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i)
    if (finished[i].score > finished[best].score) best = i;
  return finished[best];
}

Hypothesis greedy_decode(const StepFunction& step, int vocab_size, int max_len) {
  check_decode_args(vocab_size, 1, max_len);
  Hypothesis h;
  h.tokens = {special::kBos};
  while (true) {
    const auto lp = checked_step(step, h.tokens, vocab_size);
    int best = special::kEos;
    for (int v = special::kEos + 1; v < vocab_size; ++v)
      if (lp[static_cast<std::size_t>(v)] > lp[static_cast<std::size_t>(best)]) best = v;
    h.tokens.push_back(best);
    h.log_prob += lp[static_cast<std::size_t>(best)];
    if (best == special::kEos || static_cast<int>(h.tokens.size()) >= max_len) break;
  }
  h.score = h.log_prob / static_cast<double>(h.tokens.size() - 1);
  return h;
}

}  // namespace orid
