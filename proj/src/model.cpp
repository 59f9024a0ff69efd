#include "catrinet/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

#include "catrinet/errors.hpp"
#include "catrinet/ops.hpp"
#include "catrinet/vocabulary.hpp"

namespace catrinet {

using nlohmann::json;

encoder::EncoderConfig ModelConfig::encoder_config() const {
  return {dim, heads, image_size, patch_size, ffn_expansion};
}

decoder::DecoderConfig ModelConfig::decoder_config() const {
  return {dim, heads, vocab_size, num_tags, max_len, ffn_expansion, !disable_tl};
}

attention::AttentionConfig ModelConfig::attention_config() const {
  return {heads, dim, eps_recip, batch_avg_mode};
}

json ModelConfig::to_json() const {
  return {{"dim", dim},
          {"heads", heads},
          {"image_size", image_size},
          {"patch_size", patch_size},
          {"ffn_expansion", ffn_expansion},
          {"max_len", max_len},
          {"vocab_size", vocab_size},
          {"num_tags", num_tags},
          {"disable_ca", disable_ca},
          {"disable_tl", disable_tl},
          {"batch_avg_mode", attention::to_string(batch_avg_mode)},
          {"eps_recip", eps_recip}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  static const std::set<std::string> known = {
      "dim",        "heads",      "image_size",     "patch_size", "ffn_expansion", "max_len",
      "vocab_size", "num_tags",   "disable_ca",     "disable_tl", "batch_avg_mode", "eps_recip"};
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown model config key '" + key + "'");
  }
  ModelConfig c;
  try {
    c.dim = j.value("dim", c.dim);
    c.heads = j.value("heads", c.heads);
    c.image_size = j.value("image_size", c.image_size);
    c.patch_size = j.value("patch_size", c.patch_size);
    c.ffn_expansion = j.value("ffn_expansion", c.ffn_expansion);
    c.max_len = j.value("max_len", c.max_len);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.num_tags = j.value("num_tags", c.num_tags);
    c.disable_ca = j.value("disable_ca", c.disable_ca);
    c.disable_tl = j.value("disable_tl", c.disable_tl);
    if (j.contains("batch_avg_mode")) {
      c.batch_avg_mode = attention::parse_batch_avg_mode(j.at("batch_avg_mode").get<std::string>());
    }
    c.eps_recip = j.value("eps_recip", c.eps_recip);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

struct CaTriNet::Hypothesis {
  std::vector<int> prefix;  // starts with BOS
  decoder::DecoderState state;
  double logprob = 0.0;
};

struct CaTriNet::StepResult {
  std::vector<double> dist;
  decoder::DecoderState state;
};

CaTriNet::CaTriNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.attention_config().validate();
  std::mt19937_64 rng(seed);
  encoder_ = encoder::VisualEncoder(store_, "encoder", config_.encoder_config(), rng);
  decoder_ = decoder::TripleLstmDecoder(store_, "decoder", config_.decoder_config(),
                                        config_.attention_config(), rng);
  head_state_ = attention::HeadWeightState::initial(config_.heads);
}

void CaTriNet::set_head_state(attention::HeadWeightState state) {
  if (state.w_dwa.size() != config_.heads) {
    throw DimensionError("head state holds " + std::to_string(state.w_dwa.size()) +
                         " secondary weights, model has " + std::to_string(config_.heads) +
                         " heads");
  }
  head_state_ = std::move(state);
}

std::span<const double> CaTriNet::active_dwa() const {
  if (config_.disable_ca) return {};
  return head_state_.w_dwa;
}

Var CaTriNet::context_of(Graph& g, const ImageGrid& image) const {
  encoder::EncoderOutput enc = encoder_.encode(g, image);
  // F_CL occupies the first key/value position, patches follow.
  const Var rows[2] = {enc.bag_of_words, enc.embedding};
  return ops::concat_rows(rows);
}

CaTriNet::SampleLosses CaTriNet::forward_sample(Graph& g,
                                                const corpus::EncodedSample& sample) const {
  if (sample.image == nullptr) throw ContractError("sample " + sample.id + " has no image");
  const std::size_t steps = sample.input_ids.size();
  if (steps == 0 || steps != sample.target_ids.size()) {
    throw DimensionError("sample " + sample.id + ": input and target lengths differ");
  }
  Var context = context_of(g, *sample.image);
  Var t1 = decoder_.text_transformer(g, sample.input_ids);
  attention::AdaptiveAttention::Output co =
      decoder_.co_attention().forward(g, t1, context, active_dwa());

  SampleLosses out;
  out.pooled_heads = attention::pool_heads(co.heads);

  decoder::DecoderState state = decoder_.initial_state(g);
  std::vector<Var> logits1, logits2;
  for (std::size_t t = 0; t < steps; ++t) {
    Var t1_row = ops::slice_rows(t1, t, 1);
    state.ctx = decoder_.encode_context(g, t1_row, ops::slice_rows(co.combined, t, 1), state.ctx);
    decoder::StageOutput s1 =
        decoder_.decode_stage1(g, t1_row, state.ctx.h, sample.input_ids[t], state.stage1);
    state.stage1 = s1.state;
    logits1.push_back(s1.logits);
    if (!config_.disable_tl) {
      const int gold[1] = {sample.target_ids[t]};
      decoder::StageOutput s2 = decoder_.decode_stage2(g, decoder_.embed(g, gold), s1.state.h,
                                                       sample.input_ids[t], state.stage2);
      state.stage2 = s2.state;
      logits2.push_back(s2.logits);
    }
  }
  const std::unique_ptr<bool[]> keep(new bool[steps]);
  std::fill_n(keep.get(), steps, true);
  const std::span<const bool> keep_span(keep.get(), steps);
  out.loss_1 = loss::caption_ce_logits(ops::concat_rows(logits1), sample.target_ids, keep_span);
  if (!config_.disable_tl) {
    out.loss_2 = loss::caption_ce_logits(ops::concat_rows(logits2), sample.target_ids, keep_span);
  }
  out.loss_t = loss::multilabel_soft_margin(decoder_.tag_logits(g, sample.report_ids), sample.tags);
  return out;
}

CaTriNet::BatchLosses CaTriNet::forward_batch(Graph& g,
                                              std::span<const corpus::EncodedSample> batch,
                                              const loss::LossWeights& weights) const {
  if (batch.empty()) throw EmptyInputError("empty training batch");
  BatchLosses out;
  std::vector<Var> lt, l1, l2;
  for (const auto& sample : batch) {
    SampleLosses s = forward_sample(g, sample);
    lt.push_back(s.loss_t);
    l1.push_back(s.loss_1);
    if (s.loss_2.valid()) l2.push_back(s.loss_2);
    out.pooled.push_back(std::move(s.pooled_heads));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  auto batch_mean = [inv](const std::vector<Var>& parts) {
    return ops::scale(ops::sum(ops::concat_cols(parts)), inv);
  };
  out.loss_t = batch_mean(lt);
  out.loss_1 = batch_mean(l1);
  if (!l2.empty()) out.loss_2 = batch_mean(l2);
  out.total = loss::combine(out.loss_t, out.loss_1, out.loss_2, weights);
  const Tensor& w_a = decoder_.co_attention().primary_weights(g).value();
  out.w_a.assign(w_a.values().begin(), w_a.values().end());
  return out;
}

loss::LossBreakdown CaTriNet::train_step(std::span<const corpus::EncodedSample> batch,
                                         Adam& optimizer, const loss::LossWeights& weights) {
  store_.zero_grad();
  Graph g;
  BatchLosses b = forward_batch(g, batch, weights);
  g.backward(b.total);
  optimizer.step();
  loss::LossBreakdown out{b.loss_t.item(), b.loss_1.item(),
                          b.loss_2.valid() ? b.loss_2.item() : 0.0, b.total.item()};
  if (config_.disable_ca) {
    ++head_state_.iteration;
    head_state_.w_a = b.w_a;
    head_state_.base_idx = attention::select_base_head(b.w_a);
  } else {
    head_state_ = attention::update_head_state(head_state_, b.w_a, b.pooled,
                                               config_.attention_config());
  }
  return out;
}

loss::LossBreakdown CaTriNet::evaluate_loss(std::span<const corpus::EncodedSample> batch,
                                            const loss::LossWeights& weights) const {
  Graph g(false);
  BatchLosses b = forward_batch(g, batch, weights);
  return {b.loss_t.item(), b.loss_1.item(), b.loss_2.valid() ? b.loss_2.item() : 0.0,
          b.total.item()};
}

namespace {

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

CaTriNet::StepResult CaTriNet::decode_step(Graph& g, Var context, const Hypothesis& hyp) const {
  Var t1 = decoder_.text_transformer(g, hyp.prefix);
  Var row = ops::slice_rows(t1, t1.rows() - 1, 1);
  Var attended = decoder_.co_attention().forward(g, row, context, active_dwa()).combined;
  const int x_t = hyp.prefix.back();
  StepResult out;
  out.state = hyp.state;
  out.state.ctx = decoder_.encode_context(g, row, attended, hyp.state.ctx);
  decoder::StageOutput s1 = decoder_.decode_stage1(g, row, out.state.ctx.h, x_t, hyp.state.stage1);
  out.state.stage1 = s1.state;
  Var dist = s1.dist;
  if (!config_.disable_tl) {
    const int first[1] = {static_cast<int>(argmax(s1.dist.value().values()))};
    decoder::StageOutput s2 =
        decoder_.decode_stage2(g, decoder_.embed(g, first), s1.state.h, x_t, hyp.state.stage2);
    out.state.stage2 = s2.state;
    dist = s2.dist;
  }
  out.dist.assign(dist.value().values().begin(), dist.value().values().end());
  return out;
}

Generation CaTriNet::greedy_generate(const ImageGrid& image, std::size_t max_len) const {
  if (max_len == 0 || max_len > config_.max_len) {
    throw ContractError("max_len must lie in [1, " + std::to_string(config_.max_len) + "]");
  }
  Graph g(false);
  Var context = context_of(g, image);
  Hypothesis hyp{{Vocabulary::kBos}, decoder_.initial_state(g), 0.0};
  Generation out;
  for (std::size_t step = 0; step < max_len; ++step) {
    StepResult r = decode_step(g, context, hyp);
    const std::size_t tok = argmax(r.dist);
    out.logprob += std::log(r.dist[tok]);
    ++out.length;
    if (static_cast<int>(tok) == Vocabulary::kEos) {
      out.finished = true;
      break;
    }
    out.ids.push_back(static_cast<int>(tok));
    hyp.prefix.push_back(static_cast<int>(tok));
    hyp.state = std::move(r.state);
  }
  return out;
}

Generation CaTriNet::beam_search(const ImageGrid& image, std::size_t beam_width,
                                 std::size_t max_len) const {
  if (beam_width == 0) throw ContractError("beam_width must be at least 1");
  if (max_len == 0 || max_len > config_.max_len) {
    throw ContractError("max_len must lie in [1, " + std::to_string(config_.max_len) + "]");
  }
  Graph g(false);
  Var context = context_of(g, image);
  std::vector<Hypothesis> live;
  live.push_back({{Vocabulary::kBos}, decoder_.initial_state(g), 0.0});
  std::vector<Generation> done;

  struct Candidate {
    std::size_t parent;
    int token;
    double logprob;
  };
  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<StepResult> results;
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < live.size(); ++b) {
      results.push_back(decode_step(g, context, live[b]));
      const auto& dist = results.back().dist;
      for (std::size_t tok = 0; tok < dist.size(); ++tok) {
        if (dist[tok] <= 0.0) continue;
        cands.push_back({b, static_cast<int>(tok), live[b].logprob + std::log(dist[tok])});
      }
    }
    // Every candidate has the same length here, so ranking by log-prob is
    // ranking by length-normalised score.
    const std::size_t keep = std::min(beam_width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = cands[i];
      const Hypothesis& parent = live[c.parent];
      if (c.token == Vocabulary::kEos) {
        Generation gen;
        gen.ids.assign(parent.prefix.begin() + 1, parent.prefix.end());
        gen.finished = true;
        gen.logprob = c.logprob;
        gen.length = step + 1;
        done.push_back(std::move(gen));
        continue;
      }
      Hypothesis h{parent.prefix, results[c.parent].state, c.logprob};
      h.prefix.push_back(c.token);
      next.push_back(std::move(h));
    }
    live = std::move(next);
  }
  for (const Hypothesis& h : live) {
    Generation gen;
    gen.ids.assign(h.prefix.begin() + 1, h.prefix.end());
    gen.logprob = h.logprob;
    gen.length = gen.ids.size();
    done.push_back(std::move(gen));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < done.size(); ++i)
    if (done[i].normalized() > done[best].normalized()) best = i;
  return done[best];
}

std::vector<double> CaTriNet::tag_logits(std::span<const int> report_ids) const {
  Graph g(false);
  const Tensor& t = decoder_.tag_logits(g, report_ids).value();
  return {t.values().begin(), t.values().end()};
}

std::vector<double> CaTriNet::classify_tags(std::span<const int> report_ids) const {
  Graph g(false);
  const Tensor& t = decoder_.classify_tags(g, report_ids).value();
  return {t.values().begin(), t.values().end()};
}

json CaTriNet::head_state_json() const {
  return {{"iteration", head_state_.iteration}, {"w_a", head_state_.w_a},
          {"base_idx", head_state_.base_idx},   {"w_cos", head_state_.w_cos},
          {"lambda", head_state_.lambda},       {"w_dwa", head_state_.w_dwa}};
}

void CaTriNet::load_head_state_json(const json& j) {
  attention::HeadWeightState s;
  try {
    s.iteration = j.at("iteration").get<std::size_t>();
    s.w_a = j.at("w_a").get<std::vector<double>>();
    s.base_idx = j.at("base_idx").get<std::size_t>();
    s.w_cos = j.at("w_cos").get<std::vector<double>>();
    s.lambda = j.at("lambda").get<double>();
    s.w_dwa = j.at("w_dwa").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw CompatibilityError(std::string("checkpoint head state: ") + e.what());
  }
  set_head_state(std::move(s));
}

}  // namespace catrinet
