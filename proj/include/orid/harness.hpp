#pragma once

#include "orid/corpus.hpp"
#include "orid/ds_graph.hpp"
#include "orid/metrics.hpp"
#include "orid/model.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace orid {

struct RunConfig {
  std::string data_dir;       // holds manifest.jsonl
  std::string out_dir;        // checkpoints and logs; empty keeps everything in memory
  std::string ds_graph_path;  // empty selects the built-in graph
  std::string preset = "desk";
  int dim = 0;  // 0 keeps the preset value
  int grid = 0;
  int layers = 0;
  int heads = 0;
  double lr_image = 1e-4;
  double lr_other = 5e-4;
  double beta = 0.1;
  int beam_width = 3;
  int epochs = 100;
  int batch_size = 8;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  Toggles toggles;
  int min_count = kDefaultMinCount;
  int report_len = kDefaultReportLength;
  bool augment = true;
  int crop_pad = 8;
  double flip_prob = 0.5;
  bool verbose = false;

  void validate() const;
  ModelConfig model_config(int vocab_size) const;
};

// True when ORID_DETERMINISTIC is set to anything but "" or "0".
bool deterministic_from_env();

struct PreparedData {
  Vocabulary vocab;
  DSGraph graph;
  AdjacencyMatrix adjacency;
  std::vector<Sample> train, val, test;

  const std::vector<Sample>& split(Split s) const;
};

// The vocabulary comes from training reports and descriptions only.
PreparedData prepare_data(const std::vector<RawCase>& cases, const DSGraph& graph, int min_count, int report_len,
                          const Vocabulary* fixed_vocab = nullptr);
PreparedData load_data(const RunConfig& cfg, const Vocabulary* fixed_vocab = nullptr);

// Adam with one learning rate per parameter group.
class Adam {
 public:
  Adam(nn::ParamStore& store, double lr_image, double lr_other, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step();
  double learning_rate(nn::ParamGroup g) const { return g == nn::ParamGroup::ImageExtractor ? lr_image_ : lr_other_; }
  // Learning rate the optimizer will apply to a named parameter.
  double learning_rate_of(const std::string& param_name) const;
  long steps() const { return t_; }

 private:
  nn::ParamStore& store_;
  double lr_image_, lr_other_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

// Scales all gradients so their global L2 norm is at most max_norm; returns the
// norm before scaling.
double clip_grad_norm(nn::ParamStore& store, double max_norm);

// Random translation (zero padding, at most pad pixels) and horizontal flip,
// applied identically to the image and its masks.
Sample augment_sample(const Sample& s, std::mt19937_64& rng, int pad, double flip_prob);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_ce = 0.0;
  double train_cs = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::unique_ptr<OridModel> model;  // state after the last epoch
  std::string best_checkpoint;       // encoded checkpoint of the best validation epoch
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<EpochLog> log;
};

// Called after every epoch; returning true ends training early.
using EpochCallback = std::function<bool(const EpochLog&, const OridModel&)>;

TrainResult train(const RunConfig& cfg, const PreparedData& data, const EpochCallback& on_epoch = {});

// Mean teacher-forced loss over samples (no augmentation, no gradients).
LossParts mean_loss(const OridModel& model, const std::vector<Sample>& samples, double beta);

struct TranscriptRow {
  std::string id;
  std::string generated;
  std::string reference;
  std::optional<Alpha> alpha;
};

struct EvalTranscript {
  std::string split;
  std::string toggles;
  std::vector<TranscriptRow> rows;
  metrics::MetricTable table;

  std::string to_json() const;
};

EvalTranscript evaluate(const OridModel& model, const Vocabulary& vocab, const std::vector<Sample>& samples,
                        int beam_width, const std::string& split_name);

// Loads a checkpoint and evaluates one split of the configured dataset; the
// dataset's vocabulary must match the checkpoint's.
EvalTranscript evaluate_checkpoint(const std::string& checkpoint_path, const RunConfig& cfg, Split split);

struct AblationRow {
  int row = 0;
  Toggles toggles;
  std::vector<EpochLog> log;
  EvalTranscript transcript;
};

// Trains and evaluates the five ablation rows from one base config.
std::vector<AblationRow> ablate(const RunConfig& base, const PreparedData& data, Split eval_split = Split::Val);

std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace orid
