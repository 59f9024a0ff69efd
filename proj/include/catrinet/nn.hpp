#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "catrinet/graph.hpp"
#include "catrinet/parameters.hpp"

/// Layer building blocks shared by the encoder and decoder. Layers hold
/// pointers into a ParameterStore and are cheap value types.
namespace catrinet::nn {

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         std::mt19937_64& rng, bool bias = true);

  Var operator()(Graph& g, Var x) const;

  Tensor& weight() const { return *weight_; }
  Tensor* bias() const { return bias_; }

 private:
  Tensor* weight_ = nullptr;
  Tensor* bias_ = nullptr;
};

struct LstmState {
  Var h;
  Var c;
};

/// Standard LSTM cell, gate order (input, forget, cell, output), one fused
/// weight over [x ; h_prev].
class Lstm {
 public:
  Lstm() = default;
  Lstm(ParameterStore& store, const std::string& name, std::size_t input, std::size_t hidden,
       std::mt19937_64& rng);

  LstmState zero_state(Graph& g) const;
  LstmState step(Graph& g, Var x, const LstmState& prev) const;

  std::size_t input_size() const noexcept { return input_; }
  std::size_t hidden_size() const noexcept { return hidden_; }
  Tensor& weight() const { return *weight_; }
  Tensor& bias() const { return *bias_; }

 private:
  Tensor* weight_ = nullptr;
  Tensor* bias_ = nullptr;
  std::size_t input_ = 0;
  std::size_t hidden_ = 0;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim);
  Var operator()(Graph& g, Var x) const;

 private:
  Tensor* gamma_ = nullptr;
  Tensor* beta_ = nullptr;
};

/// softmax(q k^T / sqrt(d_h) + mask) row-wise. `mask` (optional) is added
/// to the logits and must be rows(q) x rows(k).
Var attention_probs(Var q, Var k, const Tensor* mask = nullptr);

/// Lower-triangular additive mask: 0 on and below the diagonal, -1e9 above.
Tensor causal_mask(std::size_t n);

/// How a positional-gated block mixes content and positional attention.
struct GateMode {
  enum class Kind { plain, learned, forced } kind = Kind::learned;
  double value = 0.0;

  static GateMode plain() { return {Kind::plain, 0.0}; }
  static GateMode learned() { return {Kind::learned, 0.0}; }
  static GateMode forced(double g) { return {Kind::forced, g}; }
};

/// Multi-head self-attention with residual and post layer norm. When built
/// with a grid side it becomes gated positional self-attention: per head
///   A = (1 - g_h) softmax(QK^T / sqrt(d_h)) + g_h softmax(P_h)
/// where P_h holds one learned logit per relative (row, col) patch offset.
class SelfAttentionBlock {
 public:
  SelfAttentionBlock() = default;
  SelfAttentionBlock(ParameterStore& store, const std::string& name, std::size_t dim,
                     std::size_t heads, std::mt19937_64& rng, std::size_t grid_side = 0);

  Var forward(Graph& g, Var x, const Tensor* mask = nullptr,
              GateMode gate = GateMode::learned()) const;

  /// Per-head attention matrices as used by `forward`.
  std::vector<Var> attention_maps(Graph& g, Var x, const Tensor* mask = nullptr,
                                  GateMode gate = GateMode::learned()) const;

  bool gated() const noexcept { return gates_ != nullptr; }
  std::size_t heads() const noexcept { return heads_; }

 private:
  std::vector<Var> maps_from(Graph& g, Var q, Var k, const Tensor* mask, GateMode gate) const;

  Linear q_, k_, v_, o_;
  LayerNorm norm_;
  Tensor* gates_ = nullptr;
  Tensor* pos_scores_ = nullptr;
  std::size_t dim_ = 0;
  std::size_t heads_ = 0;
  std::size_t grid_side_ = 0;
};

/// LN(x + W2 gelu(W1 x + b1) + b2) with a hidden expansion factor.
class FeedForwardBlock {
 public:
  FeedForwardBlock() = default;
  FeedForwardBlock(ParameterStore& store, const std::string& name, std::size_t dim,
                   std::size_t expansion, std::mt19937_64& rng);
  Var forward(Graph& g, Var x) const;

 private:
  Linear up_, down_;
  LayerNorm norm_;
};

}  // namespace catrinet::nn
