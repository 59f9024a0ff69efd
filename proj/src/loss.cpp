#include "catrinet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "catrinet/errors.hpp"
#include "catrinet/ops.hpp"

namespace catrinet::loss {
namespace {

double log_sigmoid(double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); }

void check_lengths(std::size_t rows, std::size_t gold, std::size_t keep) {
  if (rows != gold || gold != keep) {
    throw DimensionError("caption_ce: " + std::to_string(rows) + " distributions, " +
                         std::to_string(gold) + " gold ids, " + std::to_string(keep) +
                         " mask entries");
  }
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in (0, 1], got " + std::to_string(alpha));
  }
  if (!(beta > 1.0 && beta <= 10.0)) {
    throw ConfigError("beta must lie in (1, 10], got " + std::to_string(beta));
  }
}

double caption_ce(std::span<const std::vector<double>> dists, std::span<const int> gold,
                  std::span<const bool> keep) {
  check_lengths(dists.size(), gold.size(), keep.size());
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < dists.size(); ++t) {
    if (!keep[t]) continue;
    if (gold[t] < 0 || static_cast<std::size_t>(gold[t]) >= dists[t].size()) {
      throw ContractError("gold id " + std::to_string(gold[t]) + " outside vocabulary of " +
                          std::to_string(dists[t].size()));
    }
    acc -= std::log(dists[t][static_cast<std::size_t>(gold[t])]);
    ++n;
  }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

Var caption_ce_logits(Var logits, std::span<const int> gold, std::span<const bool> keep) {
  check_lengths(logits.rows(), gold.size(), keep.size());
  const std::size_t v = logits.cols();
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    if (!keep[t]) continue;
    if (gold[t] < 0 || static_cast<std::size_t>(gold[t]) >= v) {
      throw ContractError("gold id " + std::to_string(gold[t]) + " outside vocabulary of " +
                          std::to_string(v));
    }
    idx.push_back(t * v + static_cast<std::size_t>(gold[t]));
  }
  if (idx.empty()) throw EmptyInputError("caption_ce over a fully masked sequence");
  Var picked = ops::gather(ops::log_softmax(logits), idx, {1, idx.size()});
  return ops::scale(ops::sum(picked), -1.0 / static_cast<double>(idx.size()));
}

double multilabel_soft_margin(std::span<const double> logits, std::span<const double> tags) {
  if (logits.size() != tags.size() || logits.empty()) {
    throw DimensionError("multilabel_soft_margin: " + std::to_string(logits.size()) +
                         " logits vs " + std::to_string(tags.size()) + " tags");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    acc += tags[i] * log_sigmoid(logits[i]) + (1.0 - tags[i]) * log_sigmoid(-logits[i]);
  return -acc / static_cast<double>(logits.size());
}

Var multilabel_soft_margin(Var logits, std::span<const double> tags) {
  const std::size_t c = logits.value().size();
  if (c != tags.size() || c == 0) {
    throw DimensionError("multilabel_soft_margin: " + std::to_string(c) + " logits vs " +
                         std::to_string(tags.size()) + " tags");
  }
  Graph& g = logits.graph();
  Var z = ops::reshape(logits, {1, c});
  Tensor pos({1, c}), neg({1, c});
  for (std::size_t i = 0; i < c; ++i) {
    pos[i] = tags[i];
    neg[i] = 1.0 - tags[i];
  }
  Var on = ops::mul(ops::log_sigmoid(z), g.constant(std::move(pos)));
  Var off = ops::mul(ops::log_sigmoid(ops::scale(z, -1.0)), g.constant(std::move(neg)));
  return ops::scale(ops::sum(ops::add(on, off)), -1.0 / static_cast<double>(c));
}

LossBreakdown combine(double loss_t, double loss_1, double loss_2, const LossWeights& w) {
  w.validate();
  if (!std::isfinite(loss_t) || !std::isfinite(loss_1) || !std::isfinite(loss_2)) {
    throw NonFiniteError("non-finite loss component");
  }
  return {loss_t, loss_1, loss_2, loss_t + w.alpha * loss_1 + w.beta * loss_2};
}

Var combine(Var loss_t, Var loss_1, Var loss_2, const LossWeights& w) {
  w.validate();
  Var total = ops::add(loss_t, ops::scale(loss_1, w.alpha));
  if (loss_2.valid()) total = ops::add(total, ops::scale(loss_2, w.beta));
  return total;
}

}  // namespace catrinet::loss
