#include <doctest.h>

#include <cmath>
#include <random>

#include "catrinet/errors.hpp"
#include "catrinet/loss.hpp"
#include "catrinet/ops.hpp"

using namespace catrinet;
using namespace catrinet::loss;

namespace {

// Direct evaluation of the soft-margin formula with plain exp/log, used only
// for moderate logits where it is accurate.
double soft_margin_direct(const std::vector<double>& z, const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-z[i]));
    acc += y[i] * std::log(s) + (1.0 - y[i]) * std::log(1.0 - s);
  }
  return -acc / static_cast<double>(z.size());
}

}  // namespace

TEST_CASE("caption cross-entropy closed forms") {
  const std::vector<std::vector<double>> onehot = {{0, 1, 0}, {1, 0, 0}};
  const int gold[2] = {1, 0};
  const bool keep[2] = {true, true};
  CHECK(caption_ce(onehot, gold, keep) == 0.0);

  const std::vector<std::vector<double>> uniform(3, std::vector<double>(4, 0.25));
  const int g3[3] = {0, 3, 2};
  const bool k3[3] = {true, true, true};
  CHECK(caption_ce(uniform, g3, k3) == doctest::Approx(std::log(4.0)).epsilon(1e-15));

  const int bad[2] = {1, 3};
  CHECK_THROWS_AS(caption_ce(onehot, bad, keep), ContractError);
  const int one[1] = {0};
  CHECK_THROWS_AS(caption_ce(onehot, one, keep), DimensionError);
}

TEST_CASE("padding positions do not change the loss") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  Graph g;
  Tensor logits({3, 5});
  for (double& x : logits.values()) x = n(rng);
  Tensor padded({5, 5});
  for (std::size_t i = 0; i < 15; ++i) padded[i] = logits[i];
  for (std::size_t i = 15; i < 25; ++i) padded[i] = n(rng);
  const int gold[3] = {1, 4, 2};
  const int gold_pad[5] = {1, 4, 2, 0, 0};
  const bool keep[3] = {true, true, true};
  const bool keep_pad[5] = {true, true, true, false, false};
  const double a = caption_ce_logits(g.constant(logits), gold, keep).item();
  const double b = caption_ce_logits(g.constant(padded), gold_pad, keep_pad).item();
  CHECK(std::abs(a - b) <= 1e-12);
  const bool none[3] = {false, false, false};
  CHECK_THROWS_AS(caption_ce_logits(g.constant(logits), gold, none), EmptyInputError);
}

TEST_CASE("graph cross-entropy agrees with the probability form") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 2.0);
  Graph g;
  Tensor logits({4, 6});
  for (double& x : logits.values()) x = n(rng);
  Var v = g.constant(logits);
  const Tensor p = ops::softmax(v, 1).value();
  std::vector<std::vector<double>> dists(4, std::vector<double>(6));
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 6; ++c) dists[r][c] = p.at(r, c);
  const int gold[4] = {0, 5, 2, 2};
  const bool keep[4] = {true, false, true, true};
  CHECK(caption_ce_logits(v, gold, keep).item() ==
        doctest::Approx(caption_ce(dists, gold, keep)).epsilon(1e-12));
}

TEST_CASE("cross-entropy falls as mass moves to the gold token") {
  double prev = std::numeric_limits<double>::infinity();
  const int gold[1] = {2};
  const bool keep[1] = {true};
  for (int k = 1; k <= 19; ++k) {
    const double q = 0.05 * k;
    const std::vector<std::vector<double>> d = {{(1 - q) / 2, (1 - q) / 2, q}};
    const double l = caption_ce(d, gold, keep);
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("multi-label soft margin") {
  const double z0[1] = {0.0}, y1[1] = {1.0};
  CHECK(multilabel_soft_margin(z0, y1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const double z20[1] = {20.0};
  const double sat = multilabel_soft_margin(z20, y1);
  CHECK(std::isfinite(sat));
  CHECK(sat == doctest::Approx(2.0611536e-9).epsilon(1e-6));
  const double big[2] = {800.0, -800.0}, y01[2] = {0.0, 1.0};
  CHECK(multilabel_soft_margin(big, y01) == doctest::Approx(800.0));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 3.0);
  std::bernoulli_distribution b(0.4);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> z(6), y(6);
    for (std::size_t i = 0; i < 6; ++i) {
      z[i] = n(rng);
      y[i] = b(rng) ? 1.0 : 0.0;
    }
    const double got = multilabel_soft_margin(z, y);
    REQUIRE(got >= 0.0);
    REQUIRE(std::abs(got - soft_margin_direct(z, y)) <= 1e-12);
    Graph g;
    const double graph_form = multilabel_soft_margin(g.constant(Tensor::row(z)), y).item();
    REQUIRE(std::abs(graph_form - got) <= 1e-12);
  }
  const double two[2] = {0.0, 1.0};
  CHECK_THROWS_AS(multilabel_soft_margin(two, y1), DimensionError);
}

TEST_CASE("combination weights") {
  LossWeights w;
  CHECK(combine(1.0, 1.0, 1.0, w).total == 7.0);
  CHECK(combine(0.0, 0.0, 0.0, w).total == 0.0);
  const LossBreakdown a = combine(0.3, 0.7, 0.11, w);
  const LossBreakdown b = combine(0.6, 1.4, 0.22, w);
  CHECK(std::abs(b.total - 2.0 * a.total) <= 1e-12);

  Tensor parts = Tensor::row({0.3, 0.7, 0.11});
  parts.set_requires_grad(true);
  {
    Graph g;
    Var p = g.parameter(parts);
    Var total = combine(ops::element(p, 0), ops::element(p, 1), ops::element(p, 2), w);
    CHECK(total.item() == doctest::Approx(0.3 + 0.7 + 5 * 0.11));
    g.backward(total);
  }
  CHECK(parts.grad()[0] == 1.0);
  CHECK(parts.grad()[1] == 1.0);
  CHECK(parts.grad()[2] == 5.0);

  LossWeights bad;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.alpha = 1.0;
  bad.beta = 1.0;
  CHECK_THROWS_AS(combine(0.0, 0.0, 0.0, bad), ConfigError);
  bad.beta = 10.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(combine(std::nan(""), 0.0, 0.0, w), NonFiniteError);
}
