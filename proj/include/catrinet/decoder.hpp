#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "catrinet/attention.hpp"
#include "catrinet/graph.hpp"
#include "catrinet/nn.hpp"
#include "catrinet/parameters.hpp"

namespace catrinet::decoder {

struct DecoderConfig {
  std::size_t dim = 512;
  std::size_t heads = 8;
  std::size_t vocab_size = 0;
  std::size_t num_tags = 6;
  std::size_t max_len = 60;
  std::size_t ffn_expansion = 4;
  /// Second generation LSTM and its vocabulary head. Off collapses decoding
  /// to the first stage.
  bool stage2 = true;

  void validate() const;
};

struct StageOutput {
  nn::LstmState state;
  Var logits;  // 1 x V
  Var dist;    // softmax(logits)
};

/// Per-sequence decoding state: the three generator LSTMs.
struct DecoderState {
  nn::LstmState ctx;     // h1: context-encoding LSTM
  nn::LstmState stage1;  // h2: first generation LSTM
  nn::LstmState stage2;  // h3: second generation LSTM
};

/// Text transformer, co-attention, the three report LSTMs with their
/// vocabulary heads, and the label LSTM over a report. A single word
/// embedding W_e (V x d) is shared by every component.
class TripleLstmDecoder {
 public:
  TripleLstmDecoder() = default;
  TripleLstmDecoder(ParameterStore& store, const std::string& name, const DecoderConfig& config,
                    const attention::AttentionConfig& attn, std::mt19937_64& rng);

  /// Rows of W_e for `ids`; ids outside [0, V) map to UNK.
  Var embed(Graph& g, std::span<const int> ids) const;

  /// One causal self-attention layer over the embedded prefix; row t is the
  /// context T1_t and depends only on ids[0..t].
  Var text_transformer(Graph& g, std::span<const int> prefix_ids) const;

  nn::LstmState encode_context(Graph& g, Var t1_row, Var attended_row,
                               const nn::LstmState& prev) const;
  StageOutput decode_stage1(Graph& g, Var t1_row, Var h1, int x_t,
                            const nn::LstmState& prev) const;
  StageOutput decode_stage2(Graph& g, Var t2_row, Var h2, int x_t,
                            const nn::LstmState& prev) const;

  /// Unnormalised label scores W_t LSTM(RP_emb) + b_t, 1 x C.
  Var tag_logits(Graph& g, std::span<const int> report_ids) const;
  /// softmax of `tag_logits`.
  Var classify_tags(Graph& g, std::span<const int> report_ids) const;

  DecoderState initial_state(Graph& g) const;

  const DecoderConfig& config() const noexcept { return config_; }
  const attention::AdaptiveAttention& co_attention() const noexcept { return co_attention_; }
  const nn::Lstm& context_lstm() const noexcept { return ctx_lstm_; }
  const nn::Lstm& stage1_lstm() const noexcept { return stage1_lstm_; }
  const nn::Lstm& stage2_lstm() const noexcept { return stage2_lstm_; }
  const nn::Lstm& label_lstm() const noexcept { return label_lstm_; }
  const nn::Linear& fc1() const noexcept { return fc1_; }
  const nn::Linear& fc2() const noexcept { return fc2_; }
  Tensor& embedding() const { return *embedding_; }

 private:
  DecoderConfig config_;
  Tensor* embedding_ = nullptr;
  Tensor* text_positional_ = nullptr;
  nn::SelfAttentionBlock text_attention_;
  nn::FeedForwardBlock text_ffn_;
  attention::AdaptiveAttention co_attention_;
  nn::Lstm ctx_lstm_;
  nn::Lstm stage1_lstm_;
  nn::Lstm stage2_lstm_;
  nn::Linear fc1_;
  nn::Linear fc2_;
  nn::Lstm label_lstm_;
  nn::Linear label_head_;
};

}  // namespace catrinet::decoder
