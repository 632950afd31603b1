#pragma once

#include "orid/corpus.hpp"
#include "orid/nn.hpp"
#include "orid/ocf.hpp"

#include <functional>
#include <vector>

namespace orid {

struct GeneratorConfig {
  int vocab_size = 0;
  int dim = 32;
  int layers = 3;
  int heads = 8;
  int ffn = 64;
  int max_positions = 512;
};

// Sinusoidal position table, rows x dim.
Matrix sinusoid_positions(int rows, int dim);

struct EncodedImage {
  Var states;  // P x d
  Var pooled;  // 1 x d, positionwise mean of states
};

class ReportGenerator {
 public:
  ReportGenerator() = default;
  ReportGenerator(nn::ParamStore& store, const GeneratorConfig& cfg, nn::Initializer& init);

  EncodedImage encode(const Var& x_input) const;

  // Causal decoding of a BOS-led prefix; row t scores the token after prefix[t].
  Var decode(const EncodedImage& enc, std::span<const int> prefix) const;

  // Decodes the non-PAD prefix of a padded target.
  Var decode_teacher_forced(const EncodedImage& enc, const TokenSeq& target) const;

  // Mean decoder token embedding over the non-PAD target tokens (1 x d).
  Var target_embedding(const TokenSeq& target) const;

  // Log-probabilities of the next token after prefix.
  std::vector<double> next_log_probs(const EncodedImage& enc, const TokenSeq& prefix) const;

  const GeneratorConfig& config() const { return cfg_; }

 private:
  struct EncoderLayer {
    nn::LayerNorm ln1, ln2;
    MultiHeadAttention attn;
    nn::Linear ff1, ff2;
  };
  struct DecoderLayer {
    nn::LayerNorm ln1, ln2, ln3;
    MultiHeadAttention self_attn, cross_attn;
    nn::Linear ff1, ff2;
  };

  GeneratorConfig cfg_;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
  nn::LayerNorm enc_norm_, dec_norm_;
  nn::Embedding embed_;
  nn::Linear out_;
  Matrix positions_;
};

// 1 - cos(a, b). Throws "degenerate embedding" when either norm is zero.
Var consistency_loss(const Var& pooled_image, const Var& target_embedding);

struct LossParts {
  Var total;
  double ce = 0.0;
  double cs = 0.0;
};

// Next-token cross-entropy targets for teacher-forced logits: row t predicts
// target[t+1]; PAD positions and the row after EOS are ignored (-1).
std::vector<int> shifted_targets(const TokenSeq& target, Eigen::Index rows);

// L = CE + beta * CS.
LossParts total_loss(const Var& logits, const TokenSeq& target, const Var& pooled_image,
                     const Var& target_embedding, double beta = 0.1);

// ---- decoding ----

// Log-probabilities over the vocabulary for the token that follows prefix.
using StepFunction = std::function<std::vector<double>(const TokenSeq& prefix)>;

struct Hypothesis {
  TokenSeq tokens;  // starts with BOS; ends with EOS unless cut by max_len
  double log_prob = 0.0;
  double score = 0.0;  // log_prob divided by the number of generated tokens
};

// Length-normalized beam search. PAD and BOS are never generated; max_len
// counts BOS. Ties prefer the lower token id, then the older hypothesis.
Hypothesis beam_search(const StepFunction& step, int vocab_size, int width, int max_len);
Hypothesis greedy_decode(const StepFunction& step, int vocab_size, int max_len);

}  // namespace orid
