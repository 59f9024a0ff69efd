#include <doctest.h>

#include <random>

#include "catrinet/encoder.hpp"
#include "catrinet/errors.hpp"
#include "catrinet/ops.hpp"
#include "grad_check.hpp"

using namespace catrinet;
using catrinet::encoder::EncoderConfig;
using catrinet::encoder::VisualEncoder;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.dim = 8;
  c.heads = 2;
  c.image_size = 16;
  c.patch_size = 4;
  c.ffn_expansion = 2;
  return c;
}

ImageGrid random_image(std::size_t size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageGrid img{size, size, std::vector<double>(size * size)};
  for (double& p : img.pixels) p = u(rng);
  return img;
}

Tensor random_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t({rows, cols});
  for (double& x : t.values()) x = n(rng);
  return t;
}

void fill(Tensor& t, double v) {
  for (double& x : t.values()) x = v;
}

}  // namespace

TEST_CASE("patch embedding shapes and linearity") {
  std::mt19937_64 rng(1);
  ParameterStore store;
  EncoderConfig cfg;
  cfg.dim = 16;
  cfg.heads = 4;
  VisualEncoder enc(store, "enc", cfg, rng);
  Graph g;
  const ImageGrid img = random_image(32, rng);
  CHECK(enc.patch_embed(g, img).rows() == 16);
  CHECK(enc.patch_embed(g, img).cols() == 16);

  // With zero pixels and zero bias only the positional table remains.
  fill(*enc.patch_projection().bias(), 0.0);
  const ImageGrid black{32, 32, std::vector<double>(32 * 32, 0.0)};
  const Tensor& e = enc.patch_embed(g, black).value();
  CHECK(e.data() == enc.positional().data());
}

TEST_CASE("indivisible or mismatched image sizes are configuration errors") {
  EncoderConfig bad = small_config();
  bad.patch_size = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  std::mt19937_64 rng(2);
  ParameterStore store;
  VisualEncoder enc(store, "enc", small_config(), rng);
  Graph g;
  CHECK_THROWS_AS(enc.patch_embed(g, random_image(20, rng)), ConfigError);
}

TEST_CASE("gated positional attention reductions") {
  std::mt19937_64 rng(3);
  ParameterStore store;
  VisualEncoder enc(store, "enc", small_config(), rng);
  const Tensor x = random_rows(16, 8, rng);
  const Tensor y = random_rows(16, 8, rng);

  SUBCASE("gate 0 equals plain self-attention exactly") {
    Graph g;
    const Tensor gated = enc.gpsa_layer(g, g.constant(x), nn::GateMode::forced(0.0)).value();
    const Tensor plain = enc.gpsa_layer(g, g.constant(x), nn::GateMode::plain()).value();
    CHECK(gated.data() == plain.data());
  }

  SUBCASE("gate 1 makes attention independent of content") {
    Graph g;
    const auto a = enc.gpsa_block().attention_maps(g, g.constant(x), nullptr, nn::GateMode::forced(1.0));
    const auto b = enc.gpsa_block().attention_maps(g, g.constant(y), nullptr, nn::GateMode::forced(1.0));
    REQUIRE(a.size() == b.size());
    for (std::size_t h = 0; h < a.size(); ++h) CHECK(a[h].value().data() == b[h].value().data());
  }

  SUBCASE("attention rows sum to one for random gates") {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
      Graph g;
      const auto maps = enc.gpsa_block().attention_maps(g, g.constant(x), nullptr,
                                                        nn::GateMode::forced(u(rng)));
      for (const Var& m : maps) {
        const Tensor& t = m.value();
        for (std::size_t r = 0; r < t.rows(); ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < t.cols(); ++c) s += t.at(r, c);
          CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        }
      }
    }
  }

  SUBCASE("learned gate rejects the wrong patch count") {
    Graph g;
    CHECK_THROWS_AS(enc.gpsa_layer(g, g.constant(random_rows(9, 8, rng))), DimensionError);
  }
}

TEST_CASE("fc projection identity and zero weights") {
  std::mt19937_64 rng(4);
  ParameterStore store;
  VisualEncoder enc(store, "enc", small_config(), rng);
  const Tensor x = random_rows(16, 8, rng);
  Tensor& w = enc.fc().weight();
  fill(w, 0.0);
  fill(*enc.fc().bias(), 0.0);
  {
    Graph g;
    for (double v : enc.fc_project(g, g.constant(x)).value().values()) CHECK(v == 0.0);
  }
  for (std::size_t i = 0; i < 8; ++i) w.at(i, i) = 1.0;
  Graph g;
  CHECK(enc.fc_project(g, g.constant(x)).value().data() == x.data());
}

TEST_CASE("bag-of-words LSTM over patches") {
  std::mt19937_64 rng(5);
  ParameterStore store;
  VisualEncoder enc(store, "enc", small_config(), rng);
  const Tensor x = random_rows(16, 8, rng);

  SUBCASE("single patch is a single LSTM step") {
    Graph g;
    const Tensor one = ops::slice_rows(g.constant(x), 0, 1).value();
    const Tensor got = enc.ife_bagofwords(g, g.constant(one)).value();
    const nn::LstmState s = enc.ife().step(g, g.constant(one), enc.ife().zero_state(g));
    CHECK(got.data() == s.h.value().data());
  }

  SUBCASE("patch order matters") {
    Tensor reversed({16, 8});
    for (std::size_t r = 0; r < 16; ++r)
      for (std::size_t c = 0; c < 8; ++c) reversed.at(r, c) = x.at(15 - r, c);
    Graph g;
    CHECK(enc.ife_bagofwords(g, g.constant(x)).value().data() !=
          enc.ife_bagofwords(g, g.constant(reversed)).value().data());
  }

  SUBCASE("zero weights give a zero feature") {
    fill(enc.ife().weight(), 0.0);
    fill(enc.ife().bias(), 0.0);
    Graph g;
    for (double v : enc.ife_bagofwords(g, g.constant(x)).value().values()) CHECK(v == 0.0);
  }

  SUBCASE("no patches is an empty-input error") {
    Graph g;
    CHECK_THROWS_AS(enc.ife_bagofwords(g, g.constant(Tensor({0, 8}))), EmptyInputError);
  }
}

TEST_CASE("encoder output shapes and gradients") {
  std::mt19937_64 rng(6);
  ParameterStore store;
  VisualEncoder enc(store, "enc", small_config(), rng);
  // Non-trivial GPSA gates so both attention branches carry gradient.
  for (std::size_t i = 0; i < store.size(); ++i)
    if (store.name(i) == "enc.gpsa.gates") fill(store.at(i), 0.3);
  const ImageGrid img = random_image(16, rng);
  {
    Graph g;
    const auto out = enc.encode(g, img);
    CHECK(out.patch_count == 16);
    CHECK(out.embedding.rows() == 16);
    CHECK(out.embedding.cols() == 8);
    CHECK(out.bag_of_words.value().size() == 8);
  }
  auto loss = [&](Graph& g) {
    const auto out = enc.encode(g, img);
    Tensor w({16, 8});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::cos(0.37 * static_cast<double>(i));
    Var a = ops::sum(ops::mul(out.embedding, g.constant(std::move(w))));
    return ops::add(a, ops::sum(out.bag_of_words));
  };
  const gradcheck::Report r = gradcheck::check_store(store, loss);
  CAPTURE(r.worst);
  CHECK(r.max_rel < 1e-5);

  // No dead branches: every parameter saw a nonzero gradient.
  store.zero_grad();
  Graph g;
  g.backward(loss(g));
  for (std::size_t i = 0; i < store.size(); ++i) {
    double mag = 0.0;
    for (double v : store.at(i).grad()) mag += std::abs(v);
    CAPTURE(store.name(i));
    CHECK(mag > 0.0);
  }
}
