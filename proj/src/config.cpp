#include "catrinet/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "catrinet/errors.hpp"

namespace catrinet {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

void RunConfig::validate() const {
  if (model.dim == 0 || model.heads < 2 || model.dim % model.heads != 0) {
    throw ConfigError("model.dim must be a positive multiple of model.heads, heads >= 2");
  }
  if (model.patch_size == 0 || model.image_size % model.patch_size != 0) {
    throw ConfigError("model.image_size must be a multiple of model.patch_size");
  }
  if (model.max_len < 2) throw ConfigError("model.max_len must be at least 2");
  if (model.ffn_expansion == 0) throw ConfigError("model.ffn_expansion must be positive");
  if (!(model.eps_recip > 0.0)) throw ConfigError("model.eps_recip must be positive");
  if (!(optimizer.lr > 0.0)) throw ConfigError("optimizer.lr must be positive");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
      !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (!(optimizer.eps > 0.0)) throw ConfigError("optimizer.eps must be positive");
  if (!(optimizer.clip_norm >= 0.0)) throw ConfigError("optimizer.clip_norm must be >= 0");
  loss.validate();
  if (beta_schedule != "constant") {
    throw ConfigError("loss.beta_schedule supports only \"constant\", got \"" + beta_schedule + "\"");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (beam_width == 0) throw ConfigError("beam_width must be positive");
  if (data.split.size() != 3) throw ConfigError("data.split needs three ratios");
  double split_total = 0.0;
  for (double r : data.split) {
    if (!(r >= 0.0)) throw ConfigError("data.split ratios must be non-negative");
    split_total += r;
  }
  if (std::abs(split_total - 1.0) > 1e-9) throw ConfigError("data.split ratios must sum to 1");
  if (data.path.empty()) data.synthetic.validate();
  if (data.min_count == 0) throw ConfigError("data.min_count must be positive");
  if (out.empty()) throw ConfigError("out must not be empty");
}

json RunConfig::to_json() const {
  return {
      {"model",
       {{"dim", model.dim},
        {"heads", model.heads},
        {"image_size", model.image_size},
        {"patch_size", model.patch_size},
        {"ffn_expansion", model.ffn_expansion},
        {"max_len", model.max_len},
        {"eps_recip", model.eps_recip}}},
      {"optimizer",
       {{"lr", optimizer.lr},
        {"beta1", optimizer.beta1},
        {"beta2", optimizer.beta2},
        {"eps", optimizer.eps},
        {"clip_norm", optimizer.clip_norm}}},
      {"loss", {{"alpha", loss.alpha}, {"beta", loss.beta}, {"beta_schedule", beta_schedule}}},
      {"ablation", {{"disable_ca", model.disable_ca}, {"disable_tl", model.disable_tl}}},
      {"data",
       {{"path", data.path},
        {"synthetic",
         {{"num_samples", data.synthetic.num_samples},
          {"abnormal_fraction", data.synthetic.abnormal_fraction},
          {"num_tags", data.synthetic.num_tags},
          {"noise", data.synthetic.noise},
          {"seed", data.synthetic.seed}}},
        {"split", data.split},
        {"min_count", data.min_count},
        {"split_seed", data.split_seed}}},
      {"batch_size", batch_size},
      {"epochs", epochs},
      {"seed", seed},
      {"batch_avg_mode", attention::to_string(model.batch_avg_mode)},
      {"beam_width", beam_width},
      {"out", out},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    check_keys(j,
               {"model", "optimizer", "loss", "ablation", "data", "batch_size", "epochs", "seed",
                "batch_avg_mode", "beam_width", "out"},
               "run config");
    if (j.contains("model")) {
      const json& m = j.at("model");
      check_keys(m, {"dim", "heads", "image_size", "patch_size", "ffn_expansion", "max_len",
                     "eps_recip"},
                 "model");
      read(m, "dim", c.model.dim);
      read(m, "heads", c.model.heads);
      read(m, "image_size", c.model.image_size);
      read(m, "patch_size", c.model.patch_size);
      read(m, "ffn_expansion", c.model.ffn_expansion);
      read(m, "max_len", c.model.max_len);
      read(m, "eps_recip", c.model.eps_recip);
    }
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      check_keys(o, {"lr", "beta1", "beta2", "eps", "clip_norm"}, "optimizer");
      read(o, "lr", c.optimizer.lr);
      read(o, "beta1", c.optimizer.beta1);
      read(o, "beta2", c.optimizer.beta2);
      read(o, "eps", c.optimizer.eps);
      read(o, "clip_norm", c.optimizer.clip_norm);
    }
    if (j.contains("loss")) {
      const json& l = j.at("loss");
      check_keys(l, {"alpha", "beta", "beta_schedule"}, "loss");
      read(l, "alpha", c.loss.alpha);
      read(l, "beta", c.loss.beta);
      read(l, "beta_schedule", c.beta_schedule);
    }
    if (j.contains("ablation")) {
      const json& a = j.at("ablation");
      check_keys(a, {"disable_ca", "disable_tl"}, "ablation");
      read(a, "disable_ca", c.model.disable_ca);
      read(a, "disable_tl", c.model.disable_tl);
    }
    if (j.contains("data")) {
      const json& d = j.at("data");
      check_keys(d, {"path", "synthetic", "split", "min_count", "split_seed"}, "data");
      read(d, "path", c.data.path);
      read(d, "split", c.data.split);
      read(d, "min_count", c.data.min_count);
      read(d, "split_seed", c.data.split_seed);
      if (d.contains("synthetic")) {
        const json& s = d.at("synthetic");
        check_keys(s, {"num_samples", "abnormal_fraction", "num_tags", "noise", "seed"},
                   "data.synthetic");
        read(s, "num_samples", c.data.synthetic.num_samples);
        read(s, "abnormal_fraction", c.data.synthetic.abnormal_fraction);
        read(s, "num_tags", c.data.synthetic.num_tags);
        read(s, "noise", c.data.synthetic.noise);
        read(s, "seed", c.data.synthetic.seed);
      }
    }
    read(j, "batch_size", c.batch_size);
    read(j, "epochs", c.epochs);
    read(j, "seed", c.seed);
    read(j, "beam_width", c.beam_width);
    read(j, "out", c.out);
    if (j.contains("batch_avg_mode")) {
      c.model.batch_avg_mode = attention::parse_batch_avg_mode(j.at("batch_avg_mode").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.data.synthetic.image_size = c.model.image_size;
  c.model.num_tags = c.data.synthetic.num_tags;
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace catrinet
