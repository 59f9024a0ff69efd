#include "catrinet/encoder.hpp"

#include <cmath>

#include "catrinet/errors.hpp"
#include "catrinet/ops.hpp"

namespace catrinet::encoder {

void EncoderConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("image size " + std::to_string(image_size) +
                      " is not divisible by patch size " + std::to_string(patch_size));
  }
  if (heads == 0 || dim % heads != 0) throw ConfigError("encoder dim not divisible by heads");
  if (ffn_expansion == 0) throw ConfigError("ffn expansion must be positive");
}

VisualEncoder::VisualEncoder(ParameterStore& store, const std::string& name,
                             const EncoderConfig& config, std::mt19937_64& rng)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.dim;
  patch_proj_ = nn::Linear(store, name + ".patch", config_.patch_size * config_.patch_size, d, rng);
  positional_ = &store.add(name + ".positional", {config_.patch_count(), d}, Init::uniform_small, rng);
  sa_ = nn::SelfAttentionBlock(store, name + ".sa", d, config_.heads, rng);
  gpsa_ = nn::SelfAttentionBlock(store, name + ".gpsa", d, config_.heads, rng, config_.grid_side());
  ffn_ = nn::FeedForwardBlock(store, name + ".ffn", d, config_.ffn_expansion, rng);
  fc_ = nn::Linear(store, name + ".fc", d, d, rng);
  ife_ = nn::Lstm(store, name + ".ife", d, d, rng);
}

Var VisualEncoder::patch_embed(Graph& g, const ImageGrid& image) const {
  const std::size_t ps = config_.patch_size;
  if (image.height != config_.image_size || image.width != config_.image_size) {
    throw ConfigError("image is " + std::to_string(image.height) + "x" +
                      std::to_string(image.width) + ", encoder expects " +
                      std::to_string(config_.image_size) + " square");
  }
  if (image.height % ps != 0 || image.width % ps != 0) {
    throw ConfigError("image dimensions not divisible by patch size");
  }
  // Standardize pixels per image; a constant image is only centered.
  double mean = 0.0;
  for (double p : image.pixels) mean += p;
  mean /= static_cast<double>(image.pixels.size());
  double var = 0.0;
  for (double p : image.pixels) var += (p - mean) * (p - mean);
  const double sd = std::sqrt(var / static_cast<double>(image.pixels.size()));
  const double inv_sd = sd > 1e-8 ? 1.0 / sd : 1.0;
  const std::size_t side = config_.grid_side();
  Tensor patches({config_.patch_count(), ps * ps});
  for (std::size_t pr = 0; pr < side; ++pr)
    for (std::size_t pc = 0; pc < side; ++pc)
      for (std::size_t r = 0; r < ps; ++r)
        for (std::size_t c = 0; c < ps; ++c)
          patches.at(pr * side + pc, r * ps + c) =
              (image.at(pr * ps + r, pc * ps + c) - mean) * inv_sd;
  return ops::add(patch_proj_(g, g.constant(std::move(patches))), g.parameter(*positional_));
}

Var VisualEncoder::sa_layer(Graph& g, Var x) const { return sa_.forward(g, x); }

Var VisualEncoder::gpsa_layer(Graph& g, Var x, nn::GateMode gate) const {
  return gpsa_.forward(g, x, nullptr, gate);
}

Var VisualEncoder::ffn(Graph& g, Var x) const { return ffn_.forward(g, x); }

Var VisualEncoder::fc_project(Graph& g, Var x) const { return fc_(g, x); }

Var VisualEncoder::ife_bagofwords(Graph& g, Var patches) const {
  if (patches.rows() == 0) throw EmptyInputError("IFE LSTM over zero patches");
  nn::LstmState s = ife_.zero_state(g);
  for (std::size_t p = 0; p < patches.rows(); ++p) s = ife_.step(g, ops::slice_rows(patches, p, 1), s);
  return s.h;
}

EncoderOutput VisualEncoder::encode(Graph& g, const ImageGrid& image) const {
  Var x = patch_embed(g, image);
  x = sa_layer(g, x);
  x = gpsa_layer(g, x);
  x = ffn(g, x);
  EncoderOutput out;
  out.embedding = fc_project(g, x);
  out.bag_of_words = ife_bagofwords(g, out.embedding);
  out.patch_count = config_.patch_count();
  return out;
}

}  // namespace catrinet::encoder
