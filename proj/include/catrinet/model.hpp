#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "catrinet/attention.hpp"
#include "catrinet/corpus.hpp"
#include "catrinet/decoder.hpp"
#include "catrinet/encoder.hpp"
#include "catrinet/loss.hpp"
#include "catrinet/optimizer.hpp"
#include "catrinet/parameters.hpp"

namespace catrinet {

struct ModelConfig {
  std::size_t dim = 512;
  std::size_t heads = 8;
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t ffn_expansion = 4;
  std::size_t max_len = 60;
  std::size_t vocab_size = 0;
  std::size_t num_tags = 6;
  bool disable_ca = false;
  bool disable_tl = false;
  attention::BatchAvgMode batch_avg_mode = attention::BatchAvgMode::paper_literal;
  double eps_recip = 1e-6;

  encoder::EncoderConfig encoder_config() const;
  decoder::DecoderConfig decoder_config() const;
  attention::AttentionConfig attention_config() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct Generation {
  std::vector<int> ids;  // generated tokens, EOS excluded
  bool finished = false;  // ended with EOS
  double logprob = 0.0;   // sum over emitted tokens, EOS included
  std::size_t length = 0;  // emitted tokens, EOS included

  double normalized() const { return length == 0 ? 0.0 : logprob / static_cast<double>(length); }
};

/// Full report generator: visual encoder, adaptive co-attention, triple-LSTM
/// decoder and label head. Owns its parameters and the head-weight state
/// carried between training iterations.
class CaTriNet {
 public:
  CaTriNet(const ModelConfig& config, std::uint64_t seed);
  CaTriNet(const CaTriNet&) = delete;
  CaTriNet& operator=(const CaTriNet&) = delete;

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore& params() noexcept { return store_; }
  const ParameterStore& params() const noexcept { return store_; }
  const encoder::VisualEncoder& encoder() const noexcept { return encoder_; }
  const decoder::TripleLstmDecoder& decoder() const noexcept { return decoder_; }

  const attention::HeadWeightState& head_state() const noexcept { return head_state_; }
  void set_head_state(attention::HeadWeightState state);
  /// Secondary weights applied on the next forward; empty when co-attention
  /// weighting is disabled.
  std::span<const double> active_dwa() const;

  struct SampleLosses {
    Var loss_t;
    Var loss_1;
    Var loss_2;  // invalid when the second stage is disabled
    std::vector<std::vector<double>> pooled_heads;
  };
  /// Teacher-forced forward of one sample.
  SampleLosses forward_sample(Graph& g, const corpus::EncodedSample& sample) const;

  struct BatchLosses {
    Var loss_t, loss_1, loss_2, total;
    attention::PooledHeads pooled;
    std::vector<double> w_a;
  };
  BatchLosses forward_batch(Graph& g, std::span<const corpus::EncodedSample> batch,
                            const loss::LossWeights& weights) const;

  /// Zero grads, forward, backward, Adam step, then advance the head state.
  loss::LossBreakdown train_step(std::span<const corpus::EncodedSample> batch, Adam& optimizer,
                                 const loss::LossWeights& weights);
  /// Batch losses without touching parameters or head state.
  loss::LossBreakdown evaluate_loss(std::span<const corpus::EncodedSample> batch,
                                    const loss::LossWeights& weights) const;

  Generation greedy_generate(const ImageGrid& image, std::size_t max_len) const;
  Generation beam_search(const ImageGrid& image, std::size_t beam_width,
                         std::size_t max_len) const;

  std::vector<double> tag_logits(std::span<const int> report_ids) const;
  std::vector<double> classify_tags(std::span<const int> report_ids) const;

  nlohmann::json head_state_json() const;
  void load_head_state_json(const nlohmann::json& j);

 private:
  struct Hypothesis;
  struct StepResult;
  StepResult decode_step(Graph& g, Var context, const Hypothesis& hyp) const;
  Var context_of(Graph& g, const ImageGrid& image) const;

  ModelConfig config_;
  ParameterStore store_;
  encoder::VisualEncoder encoder_;
  decoder::TripleLstmDecoder decoder_;
  attention::HeadWeightState head_state_;
};

}  // namespace catrinet
