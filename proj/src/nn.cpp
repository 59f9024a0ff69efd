#include "catrinet/nn.hpp"

#include <cmath>

#include "catrinet/errors.hpp"
#include "catrinet/ops.hpp"

namespace catrinet::nn {

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               std::mt19937_64& rng, bool bias) {
  weight_ = &store.add(name + ".weight", {in, out}, Init::xavier_uniform, rng);
  if (bias) bias_ = &store.add(name + ".bias", {1, out}, Init::zeros, rng);
}

Var Linear::operator()(Graph& g, Var x) const {
  Var y = ops::matmul(x, g.parameter(*weight_));
  if (bias_ != nullptr) y = ops::add_row(y, g.parameter(*bias_));
  return y;
}

Lstm::Lstm(ParameterStore& store, const std::string& name, std::size_t input,
           std::size_t hidden, std::mt19937_64& rng)
    : input_(input), hidden_(hidden) {
  weight_ = &store.add(name + ".weight", {input + hidden, 4 * hidden}, Init::xavier_uniform, rng);
  bias_ = &store.add(name + ".bias", {1, 4 * hidden}, Init::zeros, rng);
}

LstmState Lstm::zero_state(Graph& g) const {
  return {g.constant(Tensor({1, hidden_})), g.constant(Tensor({1, hidden_}))};
}

LstmState Lstm::step(Graph& g, Var x, const LstmState& prev) const {
  if (x.value().size() != input_) {
    throw DimensionError("lstm input width " + std::to_string(x.value().size()) +
                         ", expected " + std::to_string(input_));
  }
  const Var parts[2] = {ops::reshape(x, {1, input_}), prev.h};
  Var z = ops::add_row(ops::matmul(ops::concat_cols(parts), g.parameter(*weight_)),
                       g.parameter(*bias_));
  const std::size_t h = hidden_;
  Var i = ops::sigmoid(ops::slice_cols(z, 0, h));
  Var f = ops::sigmoid(ops::slice_cols(z, h, h));
  Var c_hat = ops::tanh(ops::slice_cols(z, 2 * h, h));
  Var o = ops::sigmoid(ops::slice_cols(z, 3 * h, h));
  Var c = ops::add(ops::mul(f, prev.c), ops::mul(i, c_hat));
  return {ops::mul(o, ops::tanh(c)), c};
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim) {
  std::mt19937_64 unused;
  gamma_ = &store.add(name + ".gamma", {1, dim}, Init::ones, unused);
  beta_ = &store.add(name + ".beta", {1, dim}, Init::zeros, unused);
}

Var LayerNorm::operator()(Graph& g, Var x) const {
  return ops::layer_norm(x, g.parameter(*gamma_), g.parameter(*beta_));
}

Var attention_probs(Var q, Var k, const Tensor* mask) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Var logits = ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt);
  if (mask != nullptr) logits = ops::add_constant(logits, *mask);
  return ops::softmax(logits, 1);
}

Tensor causal_mask(std::size_t n) {
  Tensor m({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m.at(i, j) = -1e9;
  return m;
}

SelfAttentionBlock::SelfAttentionBlock(ParameterStore& store, const std::string& name,
                                       std::size_t dim, std::size_t heads, std::mt19937_64& rng,
                                       std::size_t grid_side)
    : dim_(dim), heads_(heads), grid_side_(grid_side) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError(name + ": dim " + std::to_string(dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  q_ = Linear(store, name + ".q", dim, dim, rng);
  k_ = Linear(store, name + ".k", dim, dim, rng);
  v_ = Linear(store, name + ".v", dim, dim, rng);
  o_ = Linear(store, name + ".o", dim, dim, rng);
  norm_ = LayerNorm(store, name + ".norm", dim);
  if (grid_side > 0) {
    const std::size_t span = 2 * grid_side - 1;
    gates_ = &store.add(name + ".gates", {1, heads}, Init::zeros, rng);
    pos_scores_ = &store.add(name + ".pos_scores", {heads, span * span}, Init::uniform_small, rng);
  }
}

std::vector<Var> SelfAttentionBlock::maps_from(Graph& g, Var q, Var k, const Tensor* mask,
                                               GateMode gate) const {
  const std::size_t dh = dim_ / heads_;
  const std::size_t n = q.rows();
  const bool use_gate = gated() && gate.kind != GateMode::Kind::plain;
  if (use_gate && n != grid_side_ * grid_side_) {
    throw DimensionError("positional attention expects " +
                         std::to_string(grid_side_ * grid_side_) + " patches, got " +
                         std::to_string(n));
  }
  std::vector<Var> maps;
  maps.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    Var content = attention_probs(ops::slice_cols(q, h * dh, dh), ops::slice_cols(k, h * dh, dh),
                                  mask);
    if (!use_gate) {
      maps.push_back(content);
      continue;
    }
    const std::size_t span = 2 * grid_side_ - 1;
    std::vector<std::size_t> idx;
    idx.reserve(n * n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t dr = b / grid_side_ + grid_side_ - 1 - a / grid_side_;
        const std::size_t dc = b % grid_side_ + grid_side_ - 1 - a % grid_side_;
        idx.push_back(h * span * span + dr * span + dc);
      }
    }
    Var positional = ops::softmax(ops::gather(g.parameter(*pos_scores_), idx, {n, n}), 1);
    Var keep, mix;
    if (gate.kind == GateMode::Kind::forced) {
      keep = g.constant(Tensor::scalar(1.0 - gate.value));
      mix = g.constant(Tensor::scalar(gate.value));
    } else {
      Var logit = ops::element(g.parameter(*gates_), h);
      mix = ops::sigmoid(logit);
      keep = ops::sigmoid(ops::scale(logit, -1.0));
    }
    maps.push_back(ops::add(ops::mul_scalar(content, keep), ops::mul_scalar(positional, mix)));
  }
  return maps;
}

std::vector<Var> SelfAttentionBlock::attention_maps(Graph& g, Var x, const Tensor* mask,
                                                    GateMode gate) const {
  return maps_from(g, q_(g, x), k_(g, x), mask, gate);
}

Var SelfAttentionBlock::forward(Graph& g, Var x, const Tensor* mask, GateMode gate) const {
  const std::size_t dh = dim_ / heads_;
  Var v = v_(g, x);
  std::vector<Var> maps = maps_from(g, q_(g, x), k_(g, x), mask, gate);
  std::vector<Var> heads;
  heads.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h)
    heads.push_back(ops::matmul(maps[h], ops::slice_cols(v, h * dh, dh)));
  Var attended = o_(g, ops::concat_cols(heads));
  return norm_(g, ops::add(x, attended));
}

FeedForwardBlock::FeedForwardBlock(ParameterStore& store, const std::string& name,
                                   std::size_t dim, std::size_t expansion, std::mt19937_64& rng) {
  up_ = Linear(store, name + ".up", dim, dim * expansion, rng);
  down_ = Linear(store, name + ".down", dim * expansion, dim, rng);
  norm_ = LayerNorm(store, name + ".norm", dim);
}

Var FeedForwardBlock::forward(Graph& g, Var x) const {
  return norm_(g, ops::add(x, down_(g, ops::gelu(up_(g, x)))));
}

}  // namespace catrinet::nn
