#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "catrinet/corpus.hpp"
#include "catrinet/loss.hpp"
#include "catrinet/model.hpp"
#include "catrinet/optimizer.hpp"

namespace catrinet {

/// Where training data comes from: a dataset JSONL file, or the synthetic
/// generator when `path` is empty.
struct DataConfig {
  std::string path;
  corpus::CorpusSpec synthetic;
  std::vector<double> split = {0.7, 0.1, 0.2};
  std::size_t min_count = 1;
  std::uint64_t split_seed = 1;
};

/// Everything a run needs. Unknown keys anywhere in the JSON are rejected.
///
/// {
///   "model":     {"dim", "heads", "image_size", "patch_size", "ffn_expansion",
///                 "max_len", "eps_recip"},
///   "optimizer": {"lr", "beta1", "beta2", "eps", "clip_norm"},
///   "loss":      {"alpha", "beta", "beta_schedule"},
///   "ablation":  {"disable_ca", "disable_tl"},
///   "data":      {"path", "synthetic": {...}, "split", "min_count", "split_seed"},
///   "batch_size", "epochs", "seed", "batch_avg_mode", "beam_width", "out"
/// }
struct RunConfig {
  ModelConfig model;  // vocab_size and num_tags are filled from the data
  AdamConfig optimizer;
  loss::LossWeights loss;
  std::string beta_schedule = "constant";
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::size_t beam_width = 3;
  DataConfig data;
  std::string out = "runs/default";

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace catrinet
