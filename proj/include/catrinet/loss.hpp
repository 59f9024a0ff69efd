#pragma once

#include <span>
#include <vector>

#include "catrinet/graph.hpp"

namespace catrinet::loss {

struct LossWeights {
  double alpha = 1.0;  // scales loss_1, in (0, 1]
  double beta = 5.0;   // scales loss_2, in (1, 10]

  void validate() const;
};

struct LossBreakdown {
  double loss_t = 0.0;
  double loss_1 = 0.0;
  double loss_2 = 0.0;
  double total = 0.0;
};

/// Mean of -log p(gold_t) over positions whose mask is true. Each row of
/// `dists` is a probability vector.
double caption_ce(std::span<const std::vector<double>> dists, std::span<const int> gold,
                  std::span<const bool> keep);

/// Graph form over unnormalised logits (T x V): log-softmax then the same
/// masked mean.
Var caption_ce_logits(Var logits, std::span<const int> gold, std::span<const bool> keep);

/// -(1/C) sum_i [Tag_i log s(z_i) + (1 - Tag_i) log s(-z_i)], log-space.
double multilabel_soft_margin(std::span<const double> logits, std::span<const double> tags);
Var multilabel_soft_margin(Var logits, std::span<const double> tags);

LossBreakdown combine(double loss_t, double loss_1, double loss_2, const LossWeights& w);
/// Graph form: loss_t + alpha loss_1 + beta loss_2. A null loss_2 drops the
/// beta term.
Var combine(Var loss_t, Var loss_1, Var loss_2, const LossWeights& w);

}  // namespace catrinet::loss
