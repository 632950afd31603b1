// orid: train, evaluate and ablate organ-regional report generators, build
// instruction data and score reports.

#include "orid/array_io.hpp"
#include "orid/checkpoint.hpp"
#include "orid/harness.hpp"
#include "orid/instruct_builder.hpp"
#include "orid/metrics.hpp"
#include "orid/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace orid;

namespace {

void add_run_options(CLI::App* app, RunConfig& cfg) {
  app->add_option("--data", cfg.data_dir, "Dataset directory containing manifest.jsonl")->required();
  app->add_option("--out", cfg.out_dir, "Output directory for checkpoints and logs");
  app->add_option("--ds-graph", cfg.ds_graph_path, "DS-Graph file (default: built-in graph)");
  app->add_option("--preset", cfg.preset, "Model preset")->check(CLI::IsMember({"toy", "desk", "full"}));
  app->add_option("--dim", cfg.dim, "Feature dimension (0 = preset)");
  app->add_option("--grid", cfg.grid, "Feature grid side (0 = preset)");
  app->add_option("--layers", cfg.layers, "Encoder/decoder layers (0 = preset)");
  app->add_option("--heads", cfg.heads, "Attention heads (0 = preset)");
  app->add_option("--lr-image", cfg.lr_image, "Learning rate of the image extractor");
  app->add_option("--lr-other", cfg.lr_other, "Learning rate of the other components");
  app->add_option("--beta", cfg.beta, "Consistency loss weight");
  app->add_option("--beam-width", cfg.beam_width, "Beam width");
  app->add_option("--epochs", cfg.epochs, "Training epochs");
  app->add_option("--batch-size", cfg.batch_size, "Samples per optimizer step");
  app->add_option("--clip-norm", cfg.clip_norm, "Global gradient norm cap (0 disables)");
  app->add_option("--seed", cfg.seed, "Random seed");
  app->add_option("--min-count", cfg.min_count, "Minimum word count for the vocabulary");
  app->add_option("--report-len", cfg.report_len, "Report length in tokens, including BOS/EOS");
  app->add_option("--use-mask", cfg.toggles.use_mask, "Use organ masks");
  app->add_option("--use-ocf-fine", cfg.toggles.use_ocf_fine, "Use fine-grained fusion");
  app->add_option("--use-ocf-coarse", cfg.toggles.use_ocf_coarse, "Use coarse-grained fusion");
  app->add_option("--use-oica", cfg.toggles.use_oica, "Use importance coefficients");
  app->add_option("--augment", cfg.augment, "Random crop/flip during training");
  app->add_option("--crop-pad", cfg.crop_pad, "Maximum crop shift in pixels");
  app->add_option("--flip-prob", cfg.flip_prob, "Horizontal flip probability");
  app->add_flag("-v,--verbose", cfg.verbose, "Log every epoch");
}

std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(io::read_file(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    io::write_file(path, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Organ-regional radiology report generation"};
  app.set_config("--config", "", "INI config file; command-line flags take precedence");
  app.require_subcommand(1);

  RunConfig train_cfg, eval_cfg, ablate_cfg;

  auto* train_cmd = app.add_subcommand("train", "Train a model and keep the best and last checkpoints");
  add_run_options(train_cmd, train_cfg);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  add_run_options(eval_cmd, eval_cfg);
  std::string checkpoint, eval_split = "test", transcript_path;
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--split", eval_split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--transcript", transcript_path, "Write the transcript JSON here (default: stdout)");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate the five ablation rows");
  add_run_options(ablate_cmd, ablate_cfg);
  std::string ablate_split = "val";
  ablate_cmd->add_option("--split", ablate_split, "Split to evaluate")->check(CLI::IsMember({"train", "val", "test"}));

  auto* build_cmd = app.add_subcommand("build-instruct", "Build organ-level instruction pairs from reports");
  std::string build_data, build_out, build_stats, build_graph;
  BuilderConfig bcfg;
  std::uint64_t build_seed = 0;
  build_cmd->add_option("--data", build_data, "Dataset directory containing manifest.jsonl")->required();
  build_cmd->add_option("--out", build_out, "Output JSONL (default: stdout)");
  build_cmd->add_option("--stats", build_stats, "Write construction statistics JSON here");
  build_cmd->add_option("--ds-graph", build_graph, "DS-Graph file (default: built-in graph)");
  build_cmd->add_option("--positive-boost", bcfg.positive_boost, "Normal pairs survive with probability 1/boost");
  build_cmd->add_option("--max-duplicate-answers", bcfg.max_duplicate_answers, "Cap on repeats of one answer");
  build_cmd->add_option("--min-pairs-per-image", bcfg.min_pairs_per_image, "Skip images with fewer organ groups");
  build_cmd->add_option("--balance-tolerance", bcfg.balance_tolerance, "Allowed deviation from the mean organ count");
  build_cmd->add_option("--seed", build_seed, "Random seed");

  auto* score_cmd = app.add_subcommand("score", "Score generated reports against references");
  std::string pred_path, ref_path, score_transcript, score_format = "text";
  score_cmd->add_option("--predictions", pred_path, "One generated report per line");
  score_cmd->add_option("--references", ref_path, "One reference report per line");
  score_cmd->add_option("--transcript", score_transcript, "Evaluation transcript JSON to rescore");
  score_cmd->add_option("--format", score_format, "Output format")->check(CLI::IsMember({"text", "json"}));

  auto* synth_cmd = app.add_subcommand("synth-data", "Write a seeded synthetic dataset");
  std::string synth_out;
  int synth_n = 200;
  std::uint64_t synth_seed = 0;
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("-n,--count", synth_n, "Number of cases")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_seed, "Random seed");

  CLI11_PARSE(app, argc, argv);

  const bool deterministic = deterministic_from_env();
  try {
    if (*train_cmd) {
      if (deterministic) train_cfg.augment = false;
      if (train_cfg.out_dir.empty()) train_cfg.out_dir = "run";
      const PreparedData data = load_data(train_cfg);
      const TrainResult r = train(train_cfg, data);
      std::printf("trained %zu epochs on %zu samples; best val loss %.6f at epoch %d\n", r.log.size(),
                  data.train.size(), r.best_val_loss, r.best_epoch);
      std::printf("checkpoints: %s, %s\n", (fs::path(train_cfg.out_dir) / "best.ckpt").c_str(),
                  (fs::path(train_cfg.out_dir) / "last.ckpt").c_str());
    } else if (*eval_cmd) {
      const EvalTranscript t = evaluate_checkpoint(checkpoint, eval_cfg, parse_split(eval_split));
      if (!transcript_path.empty()) {
        io::write_file(transcript_path, t.to_json());
        std::cout << t.table.to_text();
      } else {
        std::cout << t.to_json() << "\n";
      }
    } else if (*ablate_cmd) {
      if (deterministic) ablate_cfg.augment = false;
      const PreparedData data = load_data(ablate_cfg);
      const auto rows = ablate(ablate_cfg, data, parse_split(ablate_split));
      std::cout << ablation_table(rows);
    } else if (*build_cmd) {
      const DatasetManifest m = read_manifest((fs::path(build_data) / "manifest.jsonl").string());
      std::vector<ReportRecord> corpus;
      for (const auto& r : m.records) corpus.push_back({r.id, r.report});
      const DSGraph g = build_graph.empty() ? default_ds_graph() : load_ds_graph(build_graph);
      const BuildResult res = build_qa_pairs(corpus, g, bcfg, build_seed);
      write_or_print(build_out, qa_pairs_to_jsonl(res.pairs));
      if (!build_stats.empty()) io::write_file(build_stats, res.stats.to_json() + "\n");
      for (const auto& w : res.stats.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    } else if (*score_cmd) {
      std::vector<std::string> preds, refs;
      if (!score_transcript.empty()) {
        const auto j = nlohmann::json::parse(io::read_file(score_transcript));
        for (const auto& row : j.at("samples")) {
          preds.push_back(row.at("generated").get<std::string>());
          refs.push_back(row.at("reference").get<std::string>());
        }
      } else {
        if (pred_path.empty() || ref_path.empty())
          throw std::invalid_argument("score needs --predictions and --references, or --transcript");
        preds = read_lines(pred_path);
        refs = read_lines(ref_path);
      }
      const metrics::MetricTable t = metrics::score_corpus(preds, refs);
      std::cout << (score_format == "json" ? t.to_json() + "\n" : t.to_text());
    } else if (*synth_cmd) {
      const SynthDataset ds = synth_dataset(synth_seed, synth_n);
      write_dataset(synth_out, ds.manifest, ds.cases);
      std::printf("wrote %d cases to %s\n", synth_n, synth_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
