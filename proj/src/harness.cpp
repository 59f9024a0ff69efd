#include "catrinet/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "catrinet/errors.hpp"
#include "catrinet/optimizer.hpp"
#include "catrinet/parameters.hpp"

namespace catrinet::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Shortest text that reads back to the same double.
std::string num(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
}

double parse_double(const std::string& text, const std::string& where) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ParseError(where + ": not a number '" + text + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

const std::vector<corpus::Sample>& pick_split(const corpus::Split& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

std::size_t worker_count(std::size_t jobs) {
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CATRINET_THREADS")) {
    std::size_t cap = 0;
    const std::string text(env);
    const auto res = std::from_chars(text.data(), text.data() + text.size(), cap);
    if (res.ec != std::errc() || cap == 0) {
      throw ConfigError("CATRINET_THREADS must be a positive integer, got '" + text + "'");
    }
    workers = std::min(workers, cap);
  }
  return std::max<std::size_t>(1, std::min(workers, jobs));
}

json checkpoint_meta(const RunConfig& run, const ModelConfig& model_cfg, const Vocabulary& vocab,
                     const CaTriNet& model, std::size_t epoch, std::size_t iteration,
                     double val_total) {
  return {{"run", run.to_json()},
          {"model", model_cfg.to_json()},
          {"vocab", vocab.tokens()},
          {"head_state", model.head_state_json()},
          {"epoch", epoch},
          {"iteration", iteration},
          {"val_total", val_total}};
}

}  // namespace

Dataset load_dataset(const RunConfig& config) {
  Dataset d;
  std::vector<corpus::Sample> samples;
  if (config.data.path.empty()) {
    samples = corpus::generate(config.data.synthetic);
  } else {
    corpus::LoadResult loaded = corpus::load_jsonl(config.data.path);
    samples = std::move(loaded.samples);
    d.warnings = std::move(loaded.warnings);
  }
  if (samples.empty()) throw EmptyInputError("dataset holds no samples");
  d.num_tags = samples.front().tags.size();
  for (const auto& s : samples) {
    if (s.image.height != config.model.image_size || s.image.width != config.model.image_size) {
      throw CompatibilityError("sample " + s.id + " image is " + std::to_string(s.image.height) +
                               "x" + std::to_string(s.image.width) + ", model expects " +
                               std::to_string(config.model.image_size));
    }
  }
  d.split = corpus::split(samples, config.data.split, config.data.split_seed);
  if (d.split.train.empty()) throw ConfigError("training split is empty");
  d.vocab = corpus::build_vocab(d.split.train, config.data.min_count);
  return d;
}

std::vector<corpus::EncodedSample> encode_all(const std::vector<corpus::Sample>& samples,
                                              const Vocabulary& vocab, std::size_t max_len) {
  std::vector<corpus::EncodedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(corpus::encode_sample(s, vocab, max_len));
  return out;
}

ModelConfig resolve_model_config(const RunConfig& config, const Dataset& data) {
  ModelConfig m = config.model;
  m.vocab_size = data.vocab.size();
  m.num_tags = data.num_tags;
  return m;
}

TrainResult cmd_train(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  const fs::path out(config.out);
  fs::create_directories(out);
  Dataset data = load_dataset(config);
  for (const auto& w : data.warnings) std::cerr << "warning: " << w << "\n";
  const ModelConfig model_cfg = resolve_model_config(config, data);
  CaTriNet model(model_cfg, config.seed);
  Adam adam(model.params(), config.optimizer);

  const auto train = encode_all(data.split.train, data.vocab, model_cfg.max_len);
  const auto val = encode_all(data.split.val, data.vocab, model_cfg.max_len);
  write_text(out / "config.json", config.to_json().dump(2) + "\n");

  std::ofstream steps = open_out(out / "steps.csv");
  steps << "iteration,epoch,loss_t,loss_1,loss_2,total\n";
  std::ofstream heads = open_out(out / "heads.csv");
  heads << (model_cfg.disable_ca ? "iteration,head,w_a\n" : "iteration,head,w_a,w_cos,lambda,w_dwa\n");
  std::ofstream epochs = open_out(out / "epochs.csv");
  epochs << "epoch,train_total,val_total\n";

  TrainResult result;
  result.parameter_count = model.params().parameter_count();
  result.best_checkpoint = out / "best";
  result.final_checkpoint = out / "final";
  result.best_val_total = std::numeric_limits<double>::infinity();

  std::mt19937_64 order_rng(config.seed ^ 0x6a09e667f3bcc909ull);
  std::vector<std::size_t> order(train.size());
  std::vector<corpus::EncodedSample> batch;
  std::size_t epoch = 0;
  for (epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        batch.push_back(train[order[i]]);
      }
      const loss::LossBreakdown l = model.train_step(batch, adam, config.loss);
      if (!std::isfinite(l.total)) {
        throw NonFiniteError("total loss is non-finite at iteration " +
                             std::to_string(result.iterations + 1));
      }
      ++result.iterations;
      ++batches;
      epoch_sum += l.total;
      steps << result.iterations << "," << epoch << "," << num(l.loss_t) << "," << num(l.loss_1)
            << "," << num(l.loss_2) << "," << num(l.total) << "\n";
      const attention::HeadWeightState& hs = model.head_state();
      for (std::size_t j = 0; j < model_cfg.heads; ++j) {
        heads << hs.iteration << "," << j << "," << num(hs.w_a[j]);
        if (!model_cfg.disable_ca) {
          heads << "," << num(hs.w_cos[j]) << "," << num(hs.lambda) << "," << num(hs.w_dwa[j]);
        }
        heads << "\n";
      }
    }
    const double train_total = epoch_sum / static_cast<double>(batches);
    result.epoch_train_total.push_back(train_total);

    double criterion = train_total;
    if (!val.empty()) {
      double weighted = 0.0;
      for (std::size_t start = 0; start < val.size(); start += config.batch_size) {
        const std::size_t len = std::min(config.batch_size, val.size() - start);
        const std::span<const corpus::EncodedSample> chunk(val.data() + start, len);
        weighted += model.evaluate_loss(chunk, config.loss).total * static_cast<double>(len);
      }
      criterion = weighted / static_cast<double>(val.size());
      result.epoch_val_total.push_back(criterion);
    }
    epochs << epoch << "," << num(train_total) << "," << (val.empty() ? "" : num(criterion)) << "\n";
    if (options.verbose) {
      std::cerr << "epoch " << epoch << " train_total " << train_total;
      if (!val.empty()) std::cerr << " val_total " << criterion;
      std::cerr << "\n";
    }
    if (criterion < result.best_val_total) {
      result.best_val_total = criterion;
      save_checkpoint(model.params(), result.best_checkpoint,
                      checkpoint_meta(config, model_cfg, data.vocab, model, epoch,
                                      result.iterations, criterion)
                          .dump());
    }
    if (options.stop_below && train_total < *options.stop_below) {
      ++epoch;
      break;
    }
  }
  save_checkpoint(model.params(), result.final_checkpoint,
                  checkpoint_meta(config, model_cfg, data.vocab, model, epoch - 1,
                                  result.iterations,
                                  result.epoch_val_total.empty() ? result.epoch_train_total.back()
                                                                 : result.epoch_val_total.back())
                      .dump());
  return result;
}

LoadedModel load_model(const fs::path& stem) {
  fs::path manifest_path = stem;
  manifest_path += ".json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot read checkpoint manifest " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("checkpoint manifest: " + std::string(e.what()));
  }
  LoadedModel lm;
  try {
    const json& meta = manifest.at("meta");
    lm.run = RunConfig::from_json(meta.at("run"));
    lm.vocab = Vocabulary(meta.at("vocab").get<std::vector<std::string>>());
    lm.model = std::make_unique<CaTriNet>(ModelConfig::from_json(meta.at("model")), lm.run.seed);
    load_checkpoint(lm.model->params(), stem);
    lm.model->load_head_state_json(meta.at("head_state"));
  } catch (const json::exception& e) {
    throw CompatibilityError("checkpoint metadata: " + std::string(e.what()));
  }
  if (lm.vocab.size() != lm.model->config().vocab_size) {
    throw CompatibilityError("checkpoint vocabulary size does not match its model");
  }
  return lm;
}

std::vector<Generation> generate_all(const CaTriNet& model,
                                     const std::vector<corpus::Sample>& samples,
                                     std::size_t beam_width, std::size_t max_len) {
  std::vector<Generation> out(samples.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        out[i] = model.beam_search(samples[i].image, beam_width, max_len);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const std::size_t workers = worker_count(samples.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

metrics::MetricsReport cmd_eval(const EvalOptions& options) {
  LoadedModel lm = load_model(options.checkpoint);
  RunConfig run = lm.run;
  if (!options.data_path.empty()) run.data.path = options.data_path;
  const Dataset data = load_dataset(run);
  if (!(data.vocab == lm.vocab)) {
    throw CompatibilityError("vocabulary of the evaluation data (" +
                             std::to_string(data.vocab.size()) +
                             " entries) differs from the checkpoint vocabulary (" +
                             std::to_string(lm.vocab.size()) + " entries)");
  }
  const ModelConfig& mc = lm.model->config();
  if (data.num_tags != mc.num_tags) {
    throw CompatibilityError("data has " + std::to_string(data.num_tags) +
                             " tags, checkpoint expects " + std::to_string(mc.num_tags));
  }
  const std::vector<corpus::Sample>& samples = pick_split(data.split, options.split);
  if (samples.empty()) throw EmptyInputError("split '" + options.split + "' is empty");

  const std::vector<Generation> gens = generate_all(*lm.model, samples, options.beam_width, mc.max_len);

  fs::create_directories(options.out);
  const fs::path gen_path = options.out / "generated.jsonl";
  const fs::path ref_path = options.out / "references.jsonl";
  {
    std::ofstream g = open_out(gen_path);
    std::ofstream r = open_out(ref_path);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      json label_probs = json::array();
      if (!gens[i].ids.empty()) label_probs = lm.model->classify_tags(gens[i].ids);
      g << json{{"id", samples[i].id},
                {"tokens", lm.vocab.decode_tokens(gens[i].ids)},
                {"text", lm.vocab.decode(gens[i].ids)},
                {"logprob", gens[i].logprob},
                {"label_probs", label_probs}}
               .dump()
        << "\n";
      r << json{{"id", samples[i].id}, {"refs", {samples[i].report}}}.dump() << "\n";
    }
  }
  const metrics::MetricsReport report = metrics::corpus_eval(gen_path, ref_path);

  // Label head on the gold reports: exact match of the thresholded label
  // distribution, and agreement of its argmax with a positive tag.
  std::size_t exact = 0, argmax_hits = 0;
  for (const auto& s : samples) {
    const corpus::EncodedSample enc = corpus::encode_sample(s, lm.vocab, mc.max_len);
    const std::vector<double> probs = lm.model->classify_tags(enc.report_ids);
    bool match = true;
    for (std::size_t c = 0; c < probs.size(); ++c) match &= (probs[c] >= 0.5) == (s.tags[c] != 0);
    exact += match ? 1 : 0;
    const auto top = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    argmax_hits += s.tags[top] != 0 ? 1 : 0;
  }

  json j = report.to_json();
  j["split"] = options.split;
  j["beam_width"] = options.beam_width;
  j["tag_exact_match"] = static_cast<double>(exact) / static_cast<double>(samples.size());
  j["tag_argmax_accuracy"] = static_cast<double>(argmax_hits) / static_cast<double>(samples.size());
  write_text(options.out / "metrics.json", j.dump(2) + "\n");
  return report;
}

std::vector<AblationRow> cmd_ablate(const RunConfig& config) {
  struct Variant {
    const char* name;
    const char* dir;
    bool disable_ca, disable_tl;
  };
  static constexpr Variant variants[] = {{"baseline", "baseline", true, true},
                                         {"+CA", "ca", false, true},
                                         {"+TL", "tl", true, false},
                                         {"full", "full", false, false}};
  const fs::path out(config.out);
  fs::create_directories(out);
  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    RunConfig c = config;
    c.model.disable_ca = v.disable_ca;
    c.model.disable_tl = v.disable_tl;
    c.out = (out / v.dir).string();
    const TrainResult trained = cmd_train(c);
    EvalOptions e;
    e.checkpoint = trained.best_checkpoint;
    e.split = "test";
    e.beam_width = config.beam_width;
    e.out = c.out;
    AblationRow row{v.name, v.disable_ca, v.disable_tl, trained.parameter_count, cmd_eval(e)};
    std::cerr << "ablate: " << row.variant << " parameters " << row.parameter_count << "\n";
    rows.push_back(std::move(row));
  }
  std::ofstream csv = open_out(out / "ablation.csv");
  csv << "variant,disable_ca,disable_tl,parameters,bleu1,bleu2,bleu3,bleu4,rougeL,cider\n";
  for (const auto& r : rows) {
    csv << r.variant << "," << r.disable_ca << "," << r.disable_tl << "," << r.parameter_count;
    for (double b : r.report.bleu) csv << "," << num(100.0 * b);
    csv << "," << num(100.0 * r.report.rouge_l) << "," << num(100.0 * r.report.cider) << "\n";
  }
  return rows;
}

HeadLog read_head_log(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("cannot read head log " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw InsufficientDataError("head log " + csv.string() + " is empty");
  const std::vector<std::string> header = split_csv(line);
  auto column = [&](const std::string& name) -> std::ptrdiff_t {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const std::ptrdiff_t c_iter = column("iteration"), c_head = column("head"), c_wa = column("w_a");
  const std::ptrdiff_t c_cos = column("w_cos"), c_dwa = column("w_dwa");
  if (c_iter < 0 || c_head < 0 || c_wa < 0) {
    throw ParseError(csv.string() + ": header needs iteration, head and w_a columns");
  }
  HeadLog log;
  log.has_secondary = c_cos >= 0 && c_dwa >= 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = csv.string() + ":" + std::to_string(lineno);
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != header.size()) throw ParseError(where + ": expected " + std::to_string(header.size()) + " cells");
    const auto iteration = static_cast<std::size_t>(parse_double(cells[c_iter], where));
    const auto head = static_cast<std::size_t>(parse_double(cells[c_head], where));
    if (log.iterations.empty() || log.iterations.back() != iteration) log.iterations.push_back(iteration);
    if (head >= log.w_a.size()) {
      log.w_a.resize(head + 1);
      log.w_cos.resize(head + 1);
      log.w_dwa.resize(head + 1);
    }
    log.w_a[head].push_back(parse_double(cells[c_wa], where));
    if (log.has_secondary) {
      log.w_cos[head].push_back(parse_double(cells[c_cos], where));
      log.w_dwa[head].push_back(parse_double(cells[c_dwa], where));
    }
  }
  log.num_heads = log.w_a.size();
  if (log.num_heads == 0) throw InsufficientDataError("head log " + csv.string() + " has no rows");
  return log;
}

namespace {

void write_stats_csv(const fs::path& path, const std::vector<metrics::HeadStats>& stats) {
  std::ofstream out = open_out(path);
  out << "head,mean,sd,ci_halfwidth,n\n";
  for (const auto& s : stats) {
    out << s.head << "," << num(s.mean) << "," << num(s.sd) << "," << num(s.ci_halfwidth) << ","
        << s.n << "\n";
  }
}

}  // namespace

std::string render_profile_svg(const std::vector<double>& primary,
                               const std::vector<double>& combined) {
  if (primary.size() != combined.size()) throw DimensionError("profile series differ in length");
  const double width = 60.0 * static_cast<double>(primary.size()) + 40.0;
  const double height = 240.0, plot = 180.0, base = 210.0;
  double top = 0.0;
  for (double v : primary) top = std::max(top, v);
  for (double v : combined) top = std::max(top, v);
  if (top <= 0.0) top = 1.0;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
  svg << "  <line x1=\"20\" y1=\"" << base << "\" x2=\"" << width - 20 << "\" y2=\"" << base
      << "\" stroke=\"black\"/>\n";
  for (std::size_t j = 0; j < primary.size(); ++j) {
    const double x = 30.0 + 60.0 * static_cast<double>(j);
    const double h1 = plot * std::max(0.0, primary[j]) / top;
    const double h2 = plot * std::max(0.0, combined[j]) / top;
    svg << "  <g class=\"head\" data-head=\"" << j << "\">\n";
    svg << "    <rect class=\"bar-primary\" x=\"" << x << "\" y=\"" << base - h1
        << "\" width=\"20\" height=\"" << h1 << "\" fill=\"#8da0cb\"><title>w_a " << num(primary[j])
        << "</title></rect>\n";
    svg << "    <rect class=\"bar-combined\" x=\"" << x + 22 << "\" y=\"" << base - h2
        << "\" width=\"20\" height=\"" << h2 << "\" fill=\"#fc8d62\"><title>w_a(1+w_dwa) "
        << num(combined[j]) << "</title></rect>\n";
    svg << "    <text x=\"" << x + 21 << "\" y=\"" << base + 16
        << "\" font-size=\"11\" text-anchor=\"middle\">" << j + 1 << "</text>\n";
    svg << "  </g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

StatsOutput cmd_stats_heads(const fs::path& head_csv, const fs::path& out, metrics::SdKind kind) {
  const HeadLog log = read_head_log(head_csv);
  StatsOutput result;
  result.stats = metrics::head_stats(log.has_secondary ? log.w_cos : log.w_a, kind);

  std::vector<double> primary, combined;
  for (std::size_t j = 0; j < log.num_heads; ++j) {
    const double wa = log.w_a[j].back();
    primary.push_back(wa);
    combined.push_back(log.has_secondary ? wa * (1.0 + log.w_dwa[j].back()) : wa);
  }
  fs::create_directories(out);
  result.csv = out / "head_stats.csv";
  result.svg = out / "head_profile.svg";
  write_stats_csv(result.csv, result.stats);
  write_text(result.svg, render_profile_svg(primary, combined));
  return result;
}

StatsOutput stats_from_summary(const fs::path& summary_csv, const fs::path& out) {
  std::ifstream in(summary_csv);
  if (!in) throw IoError("cannot read " + summary_csv.string());
  std::string line;
  std::getline(in, line);
  if (split_csv(line) != std::vector<std::string>{"head", "mean", "sd", "n"}) {
    throw ParseError(summary_csv.string() + ": header must be head,mean,sd,n");
  }
  StatsOutput result;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = summary_csv.string() + ":" + std::to_string(lineno);
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() != 4) throw ParseError(where + ": expected 4 cells");
    metrics::HeadStats s;
    s.head = static_cast<std::size_t>(parse_double(cells[0], where));
    s.mean = parse_double(cells[1], where);
    s.sd = parse_double(cells[2], where);
    s.n = static_cast<std::size_t>(parse_double(cells[3], where));
    s.ci_halfwidth = metrics::ci_halfwidth(s.sd, s.n);
    result.stats.push_back(s);
  }
  if (result.stats.empty()) throw InsufficientDataError(summary_csv.string() + " has no rows");
  fs::create_directories(out);
  result.csv = out / "head_stats.csv";
  write_stats_csv(result.csv, result.stats);
  return result;
}

}  // namespace catrinet::harness
