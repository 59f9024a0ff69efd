#include "catrinet/attention.hpp"

#include <cmath>

#include "catrinet/errors.hpp"
#include "catrinet/ops.hpp"

namespace catrinet::attention {

BatchAvgMode parse_batch_avg_mode(const std::string& text) {
  if (text == "paper_literal" || text == "paper") return BatchAvgMode::paper_literal;
  if (text == "batch_mean" || text == "batch") return BatchAvgMode::batch_mean;
  throw ConfigError("unknown batch_avg_mode '" + text + "'");
}

std::string to_string(BatchAvgMode mode) {
  return mode == BatchAvgMode::paper_literal ? "paper_literal" : "batch_mean";
}

void AttentionConfig::validate() const {
  if (num_heads < 2) throw ConfigError("adaptive attention needs at least 2 heads");
  if (model_dim % num_heads != 0) {
    throw ConfigError("model_dim " + std::to_string(model_dim) + " not divisible by " +
                      std::to_string(num_heads) + " heads");
  }
  if (!(eps_recip > 0.0)) throw ConfigError("eps_recip must be positive");
}

HeadWeightState HeadWeightState::initial(std::size_t num_heads) {
  HeadWeightState s;
  s.w_a.assign(num_heads, 1.0 / static_cast<double>(num_heads));
  s.w_cos.assign(num_heads, 0.0);
  s.w_dwa.assign(num_heads, 0.0);
  return s;
}

std::size_t select_base_head(std::span<const double> w_a) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < w_a.size(); ++j)
    if (w_a[j] > w_a[best]) best = j;
  return best;
}

namespace {

// Cosines within rounding distance of +-1 snap to it, so parallel heads
// compare as exactly parallel.
constexpr double kUnitCosineTolerance = 1e-12;

double snap_unit(double c) {
  if (std::abs(1.0 - std::abs(c)) <= kUnitCosineTolerance) return std::copysign(1.0, c);
  return c;
}

}  // namespace

CosineWeights cosine_head_weights(const PooledHeads& pooled, std::size_t base_idx,
                                  BatchAvgMode mode) {
  CosineWeights out;
  if (pooled.empty()) return out;
  const std::size_t n_heads = pooled.front().size();
  if (base_idx >= n_heads) throw ContractError("base head index out of range");
  out.w_cos.assign(n_heads, 0.0);
  for (const auto& sample : pooled) {
    if (sample.size() != n_heads) throw DimensionError("inconsistent head count in batch");
    std::vector<double> row(n_heads);
    for (std::size_t j = 0; j < n_heads; ++j) {
      row[j] = j == base_idx ? 1.0 : snap_unit(cosine_sim(sample[j], sample[base_idx]));
      out.w_cos[j] += row[j];
    }
    out.per_sample_cos.push_back(std::move(row));
  }
  const double denom = mode == BatchAvgMode::paper_literal ? static_cast<double>(n_heads)
                                                           : static_cast<double>(pooled.size());
  for (double& w : out.w_cos) w /= denom;
  return out;
}

double harmonic_lambda(std::span<const double> w_cos, double eps_recip) {
  if (w_cos.empty()) return 0.0;
  double recip_sum = 0.0;
  for (double w : w_cos) {
    double guarded = w;
    if (std::abs(w) < eps_recip) guarded = std::signbit(w) ? -eps_recip : eps_recip;
    recip_sum += 1.0 / guarded;
  }
  if (std::abs(recip_sum) < eps_recip) return 0.0;
  return static_cast<double>(w_cos.size()) / recip_sum;
}

std::vector<double> dwa_weights(double lambda, std::span<const double> w_cos) {
  std::vector<double> out(w_cos.size());
  for (std::size_t j = 0; j < w_cos.size(); ++j) {
    const double d = lambda - w_cos[j];
    out[j] = d > 0.0 ? d : 0.0;
  }
  return out;
}

HeadWeightState update_head_state(const HeadWeightState& prev, std::span<const double> w_a,
                                  const PooledHeads& pooled, const AttentionConfig& config) {
  HeadWeightState next;
  next.iteration = prev.iteration + 1;
  next.w_a.assign(w_a.begin(), w_a.end());
  next.base_idx = select_base_head(w_a);
  CosineWeights cw = cosine_head_weights(pooled, next.base_idx, config.batch_avg_mode);
  next.per_sample_cos = std::move(cw.per_sample_cos);
  next.w_cos = std::move(cw.w_cos);
  next.lambda = harmonic_lambda(next.w_cos, config.eps_recip);
  next.w_dwa = dwa_weights(next.lambda, next.w_cos);
  return next;
}

std::vector<std::vector<double>> pool_heads(std::span<const Var> heads) {
  std::vector<std::vector<double>> out;
  out.reserve(heads.size());
  for (Var h : heads) {
    const Tensor& t = h.value();
    std::vector<double> v(t.cols(), 0.0);
    for (std::size_t r = 0; r < t.rows(); ++r)
      for (std::size_t c = 0; c < t.cols(); ++c) v[c] += t.at(r, c);
    for (double& x : v) x /= static_cast<double>(t.rows());
    out.push_back(std::move(v));
  }
  return out;
}

AdaptiveAttention::AdaptiveAttention(ParameterStore& store, const std::string& name,
                                     const AttentionConfig& config, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.model_dim;
  q_ = nn::Linear(store, name + ".q", d, d, rng);
  k_ = nn::Linear(store, name + ".k", d, d, rng);
  v_ = nn::Linear(store, name + ".v", d, d, rng);
  o_ = nn::Linear(store, name + ".o", d, d, rng);
  gates_ = &store.add(name + ".head_gates", {1, config_.num_heads}, Init::zeros, rng);
}

std::vector<Var> AdaptiveAttention::multi_head_forward(Graph& g, Var queries,
                                                       Var keys_values) const {
  const std::size_t d = config_.model_dim;
  if (queries.cols() != d || keys_values.cols() != d) {
    throw DimensionError("co-attention expects width " + std::to_string(d));
  }
  if (keys_values.rows() == 0) throw EmptyInputError("co-attention over an empty context");
  const std::size_t dh = config_.head_dim();
  Var q = q_(g, queries);
  Var k = k_(g, keys_values);
  Var v = v_(g, keys_values);
  std::vector<Var> heads;
  heads.reserve(config_.num_heads);
  for (std::size_t j = 0; j < config_.num_heads; ++j) {
    Var probs = nn::attention_probs(ops::slice_cols(q, j * dh, dh), ops::slice_cols(k, j * dh, dh));
    heads.push_back(ops::matmul(probs, ops::slice_cols(v, j * dh, dh)));
  }
  return heads;
}

Var AdaptiveAttention::primary_weights(Graph& g) const {
  return ops::softmax(g.parameter(*gates_), 1);
}

Var AdaptiveAttention::apply_double_weights(Graph& g, std::span<const Var> heads, Var w_a,
                                            std::span<const double> w_dwa) const {
  if (heads.size() != config_.num_heads || w_dwa.size() != config_.num_heads) {
    throw DimensionError("apply_double_weights: expected " + std::to_string(config_.num_heads) +
                         " heads and weights");
  }
  std::vector<Var> scaled;
  scaled.reserve(heads.size());
  for (std::size_t j = 0; j < heads.size(); ++j) {
    Var factor = ops::scale(ops::element(w_a, j), 1.0 + w_dwa[j]);
    scaled.push_back(ops::mul_scalar(heads[j], factor));
  }
  return o_(g, ops::concat_cols(scaled));
}

Var AdaptiveAttention::apply_primary_weights(Graph& g, std::span<const Var> heads, Var w_a) const {
  if (heads.size() != config_.num_heads) {
    throw DimensionError("apply_primary_weights: expected " + std::to_string(config_.num_heads) +
                         " heads");
  }
  std::vector<Var> scaled;
  scaled.reserve(heads.size());
  for (std::size_t j = 0; j < heads.size(); ++j)
    scaled.push_back(ops::mul_scalar(heads[j], ops::element(w_a, j)));
  return o_(g, ops::concat_cols(scaled));
}

AdaptiveAttention::Output AdaptiveAttention::forward(Graph& g, Var queries, Var keys_values,
                                                     std::span<const double> w_dwa) const {
  Output out;
  out.heads = multi_head_forward(g, queries, keys_values);
  out.w_a = primary_weights(g);
  out.combined = w_dwa.empty() ? apply_primary_weights(g, out.heads, out.w_a)
                               : apply_double_weights(g, out.heads, out.w_a, w_dwa);
  return out;
}

}  // namespace catrinet::attention
