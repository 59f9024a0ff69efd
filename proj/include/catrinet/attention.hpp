#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "catrinet/graph.hpp"
#include "catrinet/nn.hpp"
#include "catrinet/parameters.hpp"

/// Cross-attention from text queries to image keys/values with double head
/// weighting. Every head j is scaled by w_a[j] * (1 + w_dwa[j]) where
///
///   w_a        = softmax(learned gates)                     primary weights
///   base       = argmax_j w_a[j]  (lowest index on ties)
///   cos_k[j]   = cos(pooled head j, pooled base head) for batch item k
///   w_cos[j]   = sum_k cos_k[j] / N   (paper_literal)  or  / B (batch_mean)
///   lambda     = N / sum_j 1 / w_cos[j]                     harmonic mean
///   w_dwa[j]   = relu(lambda - w_cos[j])
///
/// The secondary weights of one iteration are computed from the detached
/// head outputs of the previous iteration and carry no gradient.
namespace catrinet::attention {

enum class BatchAvgMode { paper_literal, batch_mean };

BatchAvgMode parse_batch_avg_mode(const std::string& text);
std::string to_string(BatchAvgMode mode);

struct AttentionConfig {
  std::size_t num_heads = 8;
  std::size_t model_dim = 512;
  double eps_recip = 1e-6;
  BatchAvgMode batch_avg_mode = BatchAvgMode::paper_literal;

  std::size_t head_dim() const { return model_dim / num_heads; }
  void validate() const;
};

struct HeadWeightState {
  std::size_t iteration = 0;
  std::vector<double> w_a;
  std::size_t base_idx = 0;
  std::vector<double> w_cos;
  double lambda = 0.0;
  std::vector<double> w_dwa;
  /// B x N raw cosines behind w_cos.
  std::vector<std::vector<double>> per_sample_cos;

  /// Neutral state: uniform w_a, zero secondary weights.
  static HeadWeightState initial(std::size_t num_heads);
};

/// Pooled head vectors of one batch: [sample][head][head_dim].
using PooledHeads = std::vector<std::vector<std::vector<double>>>;

std::size_t select_base_head(std::span<const double> w_a);

struct CosineWeights {
  std::vector<std::vector<double>> per_sample_cos;
  std::vector<double> w_cos;
};

CosineWeights cosine_head_weights(const PooledHeads& pooled, std::size_t base_idx,
                                  BatchAvgMode mode);

double harmonic_lambda(std::span<const double> w_cos, double eps_recip = 1e-6);

std::vector<double> dwa_weights(double lambda, std::span<const double> w_cos);

/// Full secondary-weight update from one batch of pooled heads.
HeadWeightState update_head_state(const HeadWeightState& prev, std::span<const double> w_a,
                                  const PooledHeads& pooled, const AttentionConfig& config);

/// Mean over the query-time axis of each head output: one vector per head.
std::vector<std::vector<double>> pool_heads(std::span<const Var> heads);

class AdaptiveAttention {
 public:
  AdaptiveAttention() = default;
  AdaptiveAttention(ParameterStore& store, const std::string& name, const AttentionConfig& config,
                    std::mt19937_64& rng);

  struct Output {
    Var combined;             // Tq x d
    std::vector<Var> heads;   // N x (Tq x d/N), before weighting
    Var w_a;                  // 1 x N
  };

  /// Per-head scaled dot-product attention outputs, unmixed.
  std::vector<Var> multi_head_forward(Graph& g, Var queries, Var keys_values) const;
  /// softmax of the learned gates, 1 x N.
  Var primary_weights(Graph& g) const;
  /// Heads scaled by w_a[j] * (1 + w_dwa[j]), concatenated, output-projected.
  Var apply_double_weights(Graph& g, std::span<const Var> heads, Var w_a,
                           std::span<const double> w_dwa) const;
  /// Heads scaled by w_a[j] only.
  Var apply_primary_weights(Graph& g, std::span<const Var> heads, Var w_a) const;

  /// Empty `w_dwa` selects primary-only attention.
  Output forward(Graph& g, Var queries, Var keys_values, std::span<const double> w_dwa) const;

  const AttentionConfig& config() const noexcept { return config_; }
  Tensor& gates() const { return *gates_; }

 private:
  AttentionConfig config_;
  nn::Linear q_, k_, v_, o_;
  Tensor* gates_ = nullptr;
};

}  // namespace catrinet::attention
