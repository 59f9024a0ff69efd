#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "catrinet/graph.hpp"
#include "catrinet/image.hpp"
#include "catrinet/nn.hpp"
#include "catrinet/parameters.hpp"

namespace catrinet::encoder {

struct EncoderConfig {
  std::size_t dim = 512;
  std::size_t heads = 8;
  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t ffn_expansion = 4;

  std::size_t grid_side() const { return image_size / patch_size; }
  std::size_t patch_count() const { return grid_side() * grid_side(); }
  void validate() const;
};

struct EncoderOutput {
  Var embedding;  // P x d patch features after the FC projection
  Var bag_of_words;  // 1 x d, final IFE LSTM state
  std::size_t patch_count = 0;
};

/// Small vision transformer trained from scratch: patch embedding, one
/// self-attention block, one gated positional self-attention block, one
/// feed-forward block, a per-patch FC projection, and an LSTM run over the
/// projected patches in raster order.
class VisualEncoder {
 public:
  VisualEncoder() = default;
  VisualEncoder(ParameterStore& store, const std::string& name, const EncoderConfig& config,
                std::mt19937_64& rng);

  /// Standardizes the image to zero mean and unit variance, cuts it into
  /// non-overlapping patches in raster order, projects each to `dim` and adds
  /// the positional table.
  Var patch_embed(Graph& g, const ImageGrid& image) const;
  Var sa_layer(Graph& g, Var x) const;
  Var gpsa_layer(Graph& g, Var x, nn::GateMode gate = nn::GateMode::learned()) const;
  Var ffn(Graph& g, Var x) const;
  Var fc_project(Graph& g, Var x) const;
  Var ife_bagofwords(Graph& g, Var patches) const;

  EncoderOutput encode(Graph& g, const ImageGrid& image) const;

  const EncoderConfig& config() const noexcept { return config_; }
  const nn::SelfAttentionBlock& gpsa_block() const noexcept { return gpsa_; }
  const nn::SelfAttentionBlock& sa_block() const noexcept { return sa_; }
  const nn::Linear& patch_projection() const noexcept { return patch_proj_; }
  const nn::Linear& fc() const noexcept { return fc_; }
  const nn::Lstm& ife() const noexcept { return ife_; }
  Tensor& positional() const { return *positional_; }

 private:
  EncoderConfig config_;
  nn::Linear patch_proj_;
  Tensor* positional_ = nullptr;
  nn::SelfAttentionBlock sa_;
  nn::SelfAttentionBlock gpsa_;
  nn::FeedForwardBlock ffn_;
  nn::Linear fc_;
  nn::Lstm ife_;
};

}  // namespace catrinet::encoder
