#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "catrinet/config.hpp"
#include "catrinet/corpus.hpp"
#include "catrinet/errors.hpp"
#include "catrinet/harness.hpp"

namespace {

using catrinet::RunConfig;
using nlohmann::json;

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> beam;
  bool disable_ca = false;
  bool disable_tl = false;
  std::string batch_avg;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "Run config JSON");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--beam", f.beam, "Beam width");
  cmd->add_flag("--disable-ca", f.disable_ca, "Primary-only co-attention weighting");
  cmd->add_flag("--disable-tl", f.disable_tl, "Single-stage decoding");
  cmd->add_option("--batch-avg", f.batch_avg, "Cosine averaging over the batch")
      ->check(CLI::IsMember({"paper", "batch"}));
}

RunConfig resolve(const RunFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig::from_json(json::object()) : RunConfig::load(f.config);
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.out = f.out;
  if (f.beam) c.beam_width = *f.beam;
  if (f.disable_ca) c.model.disable_ca = true;
  if (f.disable_tl) c.model.disable_tl = true;
  if (!f.batch_avg.empty()) c.model.batch_avg_mode = catrinet::attention::parse_batch_avg_mode(f.batch_avg);
  c.validate();
  return c;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Report generation with adaptive co-attention and a triple-LSTM decoder"};
  app.require_subcommand(1);

  RunFlags train_flags;
  bool verbose = false;
  CLI::App* train = app.add_subcommand("train", "Train a model and write logs and checkpoints");
  add_run_flags(train, train_flags);
  train->add_flag("-v,--verbose", verbose, "Per-epoch progress on stderr");

  RunFlags eval_flags;
  std::string checkpoint, split = "test", data_path;
  CLI::App* eval = app.add_subcommand("eval", "Generate with beam search and score a split");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint stem (without .json/.bin)")->required();
  eval->add_option("--split", split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--data", data_path, "Dataset JSONL overriding the checkpoint's data");
  eval->add_option("--beam", eval_flags.beam, "Beam width");
  eval->add_option("--out", eval_flags.out, "Output directory");

  RunFlags ablate_flags;
  CLI::App* ablate = app.add_subcommand("ablate", "Train and score baseline, +CA, +TL and full");
  add_run_flags(ablate, ablate_flags);

  std::string head_log, summary, stats_out = ".";
  bool sample_sd = false;
  CLI::App* stats = app.add_subcommand("stats-heads", "Per-head mean/SD/CI table and weight profile");
  stats->add_option("log", head_log, "heads.csv written by train");
  stats->add_option("--summary", summary, "CSV of head,mean,sd,n rows; prints their CI column");
  stats->add_option("--out", stats_out, "Output directory");
  stats->add_flag("--sample-sd", sample_sd, "Use the n-1 standard deviation");

  catrinet::corpus::CorpusSpec spec;
  std::string gen_out = "data.jsonl";
  CLI::App* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as JSONL");
  gen->add_option("--samples", spec.num_samples, "Number of samples");
  gen->add_option("--abnormal-fraction", spec.abnormal_fraction, "Share of abnormal studies");
  gen->add_option("--tags", spec.num_tags, "Tag classes including normal");
  gen->add_option("--image-size", spec.image_size, "Image side length");
  gen->add_option("--noise", spec.noise, "Pixel noise level");
  gen->add_option("--seed", spec.seed, "Random seed");
  gen->add_option("--out", gen_out, "Output JSONL path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const RunConfig c = resolve(train_flags);
      catrinet::harness::TrainOptions opts;
      opts.verbose = verbose;
      const auto r = catrinet::harness::cmd_train(c, opts);
      print_json({{"best_checkpoint", r.best_checkpoint.string()},
                  {"final_checkpoint", r.final_checkpoint.string()},
                  {"best_val_total", r.best_val_total},
                  {"epochs", r.epoch_train_total.size()},
                  {"iterations", r.iterations},
                  {"parameters", r.parameter_count}});
    } else if (eval->parsed()) {
      catrinet::harness::EvalOptions opts;
      opts.checkpoint = checkpoint;
      opts.split = split;
      opts.data_path = data_path;
      opts.beam_width = eval_flags.beam.value_or(3);
      opts.out = eval_flags.out.empty() ? std::string("eval") : eval_flags.out;
      print_json(catrinet::harness::cmd_eval(opts).to_json());
    } else if (ablate->parsed()) {
      const auto rows = catrinet::harness::cmd_ablate(resolve(ablate_flags));
      json j = json::array();
      for (const auto& r : rows) {
        j.push_back({{"variant", r.variant}, {"parameters", r.parameter_count},
                     {"metrics", r.report.to_json()["scaled"]}});
      }
      print_json(j);
    } else if (stats->parsed()) {
      if (head_log.empty() == summary.empty()) {
        throw catrinet::ConfigError("stats-heads needs exactly one of a head log or --summary");
      }
      const auto res = summary.empty()
                           ? catrinet::harness::cmd_stats_heads(
                                 head_log, stats_out,
                                 sample_sd ? catrinet::metrics::SdKind::sample
                                           : catrinet::metrics::SdKind::population)
                           : catrinet::harness::stats_from_summary(summary, stats_out);
      json rows = json::array();
      for (const auto& s : res.stats) {
        rows.push_back({{"head", s.head}, {"mean", s.mean}, {"sd", s.sd},
                        {"ci_halfwidth", s.ci_halfwidth}, {"n", s.n}});
      }
      print_json({{"stats", rows}, {"csv", res.csv.string()}, {"svg", res.svg.string()}});
    } else if (gen->parsed()) {
      const auto samples = catrinet::corpus::generate(spec);
      catrinet::corpus::write_jsonl(samples, gen_out);
      print_json({{"samples", samples.size()}, {"path", gen_out}});
    }
  } catch (const catrinet::Error& e) {
    std::cerr << json{{"error", e.kind()}, {"message", e.what()}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 3;
  }
  return 0;
}
