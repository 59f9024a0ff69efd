#include "catrinet/decoder.hpp"

#include "catrinet/errors.hpp"
#include "catrinet/ops.hpp"
#include "catrinet/vocabulary.hpp"

namespace catrinet::decoder {

void DecoderConfig::validate() const {
  if (vocab_size <= Vocabulary::kSpecials) throw ConfigError("vocabulary holds no real tokens");
  if (num_tags == 0) throw ConfigError("num_tags must be positive");
  if (max_len == 0) throw ConfigError("max_len must be at least 1");
  if (heads == 0 || dim % heads != 0) throw ConfigError("decoder dim not divisible by heads");
}

TripleLstmDecoder::TripleLstmDecoder(ParameterStore& store, const std::string& name,
                                     const DecoderConfig& config,
                                     const attention::AttentionConfig& attn, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.dim;
  const std::size_t v = config_.vocab_size;
  embedding_ = &store.add(name + ".embedding", {v, d}, Init::xavier_uniform, rng);
  // Positions 0..max_len: BOS plus up to max_len generated tokens.
  text_positional_ =
      &store.add(name + ".text.positional", {config_.max_len + 1, d}, Init::uniform_small, rng);
  text_attention_ = nn::SelfAttentionBlock(store, name + ".text.attn", d, config_.heads, rng);
  text_ffn_ = nn::FeedForwardBlock(store, name + ".text.ffn", d, config_.ffn_expansion, rng);
  co_attention_ = attention::AdaptiveAttention(store, name + ".co_attention", attn, rng);
  ctx_lstm_ = nn::Lstm(store, name + ".lstm_ctx", 2 * d, d, rng);
  stage1_lstm_ = nn::Lstm(store, name + ".lstm_gen1", 3 * d, d, rng);
  fc1_ = nn::Linear(store, name + ".fc1", d, v, rng, /*bias=*/false);
  if (config_.stage2) {
    stage2_lstm_ = nn::Lstm(store, name + ".lstm_gen2", 3 * d, d, rng);
    fc2_ = nn::Linear(store, name + ".fc2", d, v, rng, /*bias=*/false);
  }
  label_lstm_ = nn::Lstm(store, name + ".lstm_label", d, d, rng);
  label_head_ = nn::Linear(store, name + ".label", d, config_.num_tags, rng);
}

Var TripleLstmDecoder::embed(Graph& g, std::span<const int> ids) const {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (int id : ids) {
    const bool known = id >= 0 && static_cast<std::size_t>(id) < config_.vocab_size;
    rows.push_back(static_cast<std::size_t>(known ? id : Vocabulary::kUnk));
  }
  return ops::rows_of(g.parameter(*embedding_), rows);
}

Var TripleLstmDecoder::text_transformer(Graph& g, std::span<const int> prefix_ids) const {
  const std::size_t n = prefix_ids.size();
  if (n == 0) throw EmptyInputError("text transformer needs at least the BOS token");
  if (n > config_.max_len + 1) {
    throw ContractError("prefix of " + std::to_string(n) + " exceeds max_len + 1");
  }
  Var x = ops::add(embed(g, prefix_ids),
                   ops::slice_rows(g.parameter(*text_positional_), 0, n));
  const Tensor mask = nn::causal_mask(n);
  x = text_attention_.forward(g, x, &mask);
  return text_ffn_.forward(g, x);
}

nn::LstmState TripleLstmDecoder::encode_context(Graph& g, Var t1_row, Var attended_row,
                                                const nn::LstmState& prev) const {
  const Var parts[2] = {t1_row, attended_row};
  return ctx_lstm_.step(g, ops::concat_cols(parts), prev);
}

StageOutput TripleLstmDecoder::decode_stage1(Graph& g, Var t1_row, Var h1, int x_t,
                                             const nn::LstmState& prev) const {
  const int ids[1] = {x_t};
  const Var parts[3] = {t1_row, h1, embed(g, ids)};
  StageOutput out;
  out.state = stage1_lstm_.step(g, ops::concat_cols(parts), prev);
  out.logits = fc1_(g, out.state.h);
  out.dist = ops::softmax(out.logits, 1);
  return out;
}

StageOutput TripleLstmDecoder::decode_stage2(Graph& g, Var t2_row, Var h2, int x_t,
                                             const nn::LstmState& prev) const {
  if (!config_.stage2) throw ContractError("second decoding stage is disabled");
  const int ids[1] = {x_t};
  const Var parts[3] = {t2_row, h2, embed(g, ids)};
  StageOutput out;
  out.state = stage2_lstm_.step(g, ops::concat_cols(parts), prev);
  out.logits = fc2_(g, out.state.h);
  out.dist = ops::softmax(out.logits, 1);
  return out;
}

Var TripleLstmDecoder::tag_logits(Graph& g, std::span<const int> report_ids) const {
  if (report_ids.empty()) throw EmptyInputError("classify_tags on an empty report");
  Var emb = embed(g, report_ids);
  nn::LstmState s = label_lstm_.zero_state(g);
  for (std::size_t t = 0; t < report_ids.size(); ++t)
    s = label_lstm_.step(g, ops::slice_rows(emb, t, 1), s);
  return label_head_(g, s.h);
}

Var TripleLstmDecoder::classify_tags(Graph& g, std::span<const int> report_ids) const {
  return ops::softmax(tag_logits(g, report_ids), 1);
}

DecoderState TripleLstmDecoder::initial_state(Graph& g) const {
  DecoderState s;
  s.ctx = ctx_lstm_.zero_state(g);
  s.stage1 = stage1_lstm_.zero_state(g);
  if (config_.stage2) s.stage2 = stage2_lstm_.zero_state(g);
  return s;
}

}  // namespace catrinet::decoder
