#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "catrinet/config.hpp"
#include "catrinet/corpus.hpp"
#include "catrinet/metrics.hpp"
#include "catrinet/model.hpp"
#include "catrinet/vocabulary.hpp"

namespace catrinet::harness {

struct Dataset {
  corpus::Split split;
  Vocabulary vocab;  // built from the training split
  std::size_t num_tags = 0;
  std::vector<std::string> warnings;
};

/// Reads or generates the configured corpus, splits it and builds the
/// vocabulary. Image sizes must match the model.
Dataset load_dataset(const RunConfig& config);

std::vector<corpus::EncodedSample> encode_all(const std::vector<corpus::Sample>& samples,
                                              const Vocabulary& vocab, std::size_t max_len);

/// Model dims of `config` plus the data-dependent vocabulary and tag counts.
ModelConfig resolve_model_config(const RunConfig& config, const Dataset& data);

struct TrainOptions {
  /// Stop after the first epoch whose mean training total falls below this.
  std::optional<double> stop_below;
  bool verbose = false;  // per-epoch progress on stderr
};

struct TrainResult {
  std::filesystem::path best_checkpoint;   // stem, best validation total
  std::filesystem::path final_checkpoint;  // stem, after the last epoch
  double best_val_total = 0.0;
  std::vector<double> epoch_train_total;  // mean step total per epoch
  std::vector<double> epoch_val_total;    // empty when there is no validation split
  std::size_t iterations = 0;
  std::size_t parameter_count = 0;
};

/// Writes into config.out:
///   config.json, steps.csv, heads.csv, epochs.csv, best.{json,bin}, final.{json,bin}
TrainResult cmd_train(const RunConfig& config, const TrainOptions& options = {});

/// A model restored from a checkpoint together with what it was trained on.
struct LoadedModel {
  RunConfig run;
  Vocabulary vocab;
  std::unique_ptr<CaTriNet> model;
};

LoadedModel load_model(const std::filesystem::path& stem);

struct EvalOptions {
  std::filesystem::path checkpoint;  // stem
  std::string split = "test";        // train | val | test
  std::size_t beam_width = 3;
  std::filesystem::path out;         // generated.jsonl, references.jsonl, metrics.json
  std::string data_path;             // overrides the dataset path stored in the checkpoint
};

/// Beam-search generation over a split, then corpus metrics on the written
/// files. Raises CompatibilityError when the data's vocabulary differs from
/// the checkpoint's.
metrics::MetricsReport cmd_eval(const EvalOptions& options);

/// Per-sample generations in sample order; worker count is capped by the
/// CATRINET_THREADS environment variable.
std::vector<Generation> generate_all(const CaTriNet& model,
                                     const std::vector<corpus::Sample>& samples,
                                     std::size_t beam_width, std::size_t max_len);

struct AblationRow {
  std::string variant;
  bool disable_ca = false;
  bool disable_tl = false;
  std::size_t parameter_count = 0;
  metrics::MetricsReport report;
};

/// Trains and evaluates baseline, +CA, +TL and full under one seed and
/// writes ablation.csv into config.out.
std::vector<AblationRow> cmd_ablate(const RunConfig& config);

struct HeadLog {
  std::vector<std::size_t> iterations;  // distinct, ascending
  std::size_t num_heads = 0;
  bool has_secondary = false;
  /// [head][row]
  std::vector<std::vector<double>> w_a, w_cos, w_dwa;
};

HeadLog read_head_log(const std::filesystem::path& csv);

struct StatsOutput {
  std::vector<metrics::HeadStats> stats;
  std::filesystem::path csv;
  std::filesystem::path svg;
};

/// Table of per-head mean/SD/CI over the logged cosine weights (primary
/// weights when the log has none) and a bar profile of the final w_a next to
/// w_a (1 + w_dwa).
StatsOutput cmd_stats_heads(const std::filesystem::path& head_csv, const std::filesystem::path& out,
                            metrics::SdKind kind = metrics::SdKind::population);

/// CI column for summary (mean, SD, n) rows, one `head,mean,sd,n` line each.
StatsOutput stats_from_summary(const std::filesystem::path& summary_csv,
                               const std::filesystem::path& out);

std::string render_profile_svg(const std::vector<double>& primary,
                               const std::vector<double>& combined);

}  // namespace catrinet::harness
