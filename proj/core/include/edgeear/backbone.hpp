// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "edgeear/blob.hpp"
#include "edgeear/layer_graph.hpp"
#include "edgeear/loralin.hpp"
#include "edgeear/model_config.hpp"
#include "edgeear/parameter.hpp"
#include "edgeear/tensor.hpp"

namespace edgeear {

// Sequential seed source for deterministic per-layer initialization.
class InitSeeds {
 public:
  explicit InitSeeds(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t next();

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// Convolution with bias. Weight: [out x in/groups x k x k].
class Conv2dLayer {
 public:
  Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
              std::size_t padding, std::size_t groups);

  Tensor forward(const Tensor& x) const;

  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  std::size_t parameter_count() const { return weight_.numel() + bias_.numel(); }

  void xavier_init(std::uint64_t seed);
  void collect_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor weight_;
  Tensor bias_;
  std::size_t in_channels_;
  std::size_t kernel_;
  std::size_t stride_;
  std::size_t padding_;
  std::size_t groups_;
};

// Layer norm over axis 1 (channels) with per-channel affine.
class ChannelNorm {
 public:
  explicit ChannelNorm(std::size_t channels);

  Tensor forward(const Tensor& x) const;
  std::size_t parameter_count() const { return weight_.numel() + bias_.numel(); }
  void collect_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor weight_;
  Tensor bias_;
};

// Depthwise k x k conv, norm, pointwise d -> 4d, GELU, pointwise 4d -> d,
// layer scale, residual.
class ConvEncoder {
 public:
  ConvEncoder(std::size_t dim, std::size_t kernel, std::optional<double> expand_gamma,
              std::optional<double> contract_gamma, double layer_scale_init);

  Tensor forward(const Tensor& x) const;

  const Projection& expand() const { return expand_; }
  const Projection& contract() const { return contract_; }

  void init(InitSeeds& seeds);
  void collect_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  std::size_t dim_;
  Conv2dLayer dwconv_;
  ChannelNorm norm_;
  Projection expand_;
  Projection contract_;
  Tensor gamma_;
};

// Cross-covariance attention over channels: per head an (d/h x d/h) map
// softmax(temperature * q k^T) with q, k L2-normalized along positions.
class TransposedAttention {
 public:
  TransposedAttention(std::size_t dim, std::size_t heads, std::optional<double> qkv_gamma,
                      std::optional<double> proj_gamma);

  // x: [B x C x S] -> [B x C x S].
  Tensor forward(const Tensor& x) const;
  // Also returns the attention maps, [B x heads x C/h x C/h].
  Tensor forward_with_attention(const Tensor& x, Tensor& attention) const;

  // Attention from already projected q, k: [B x heads x C/h x S].
  Tensor attention_map(const Tensor& q, const Tensor& k) const;

  std::size_t heads() const { return heads_; }
  const Projection& qkv() const { return qkv_; }
  const Projection& proj() const { return proj_; }
  const Tensor& temperature() const { return temperature_; }

  void init(InitSeeds& seeds);
  void collect_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  std::size_t dim_;
  std::size_t heads_;
  Projection qkv_;
  Tensor temperature_;
  Projection proj_;
};

// Split depthwise-transpose attention encoder: hierarchical depthwise 3x3
// convs over channel groups, transposed attention with residual, then a
// pointwise MLP added to the block input.
class SDTAEncoder {
 public:
  struct Gammas {
    std::optional<double> qkv;
    std::optional<double> proj;
    std::optional<double> expand;
    std::optional<double> contract;
  };

  SDTAEncoder(std::size_t dim, std::size_t heads, std::size_t splits, const Gammas& gammas, double layer_scale_init);

  Tensor forward(const Tensor& x) const;

  std::size_t split_width() const { return width_; }
  std::size_t split_convs() const { return convs_.size(); }
  const TransposedAttention& attention() const { return attn_; }
  const Projection& expand() const { return expand_; }
  const Projection& contract() const { return contract_; }

  void init(InitSeeds& seeds);
  void collect_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  std::size_t dim_;
  std::size_t width_;
  std::vector<Conv2dLayer> convs_;
  ChannelNorm norm_xca_;
  Tensor gamma_xca_;
  TransposedAttention attn_;
  ChannelNorm norm_;
  Projection expand_;
  Projection contract_;
  Tensor gamma_;
};

using Block = std::variant<ConvEncoder, SDTAEncoder>;

struct ProjectionInfo {
  std::string name;
  std::size_t stage = 0;  // 1..4, 0 for the embedding head
  bool low_rank = false;
  std::optional<double> gamma;
  std::size_t rank = 0;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
};

class EdgeEarModel {
 public:
  // Validates the config (ConfigError) and Xavier-initializes from `seed`.
  EdgeEarModel(const ModelConfig& config, std::uint64_t seed);

  // images: [B x in_channels x input_size x input_size] -> [B x embedding_dim].
  // Throws DimensionError on other shapes and NumericError naming the first
  // stage whose activations are not finite.
  Tensor forward_embed(const Tensor& images) const;

  const ModelConfig& config() const { return config_; }

  // Every trainable tensor with a stable dotted name. The tensors alias the
  // model's storage.
  ParameterList parameters() const;
  std::size_t parameter_count() const;
  std::vector<ProjectionInfo> projections() const;

  // Copies values from a blob whose names and shapes match parameters().
  // Throws LoadError describing the first mismatch.
  void load_parameters(const Blob& blob);
  Blob parameter_blob() const;

  const std::vector<Block>& stage_blocks(std::size_t stage) const { return stages_.at(stage - 1); }

 private:
  ModelConfig config_;
  Conv2dLayer stem_;
  ChannelNorm stem_norm_;
  std::vector<ChannelNorm> down_norms_;
  std::vector<Conv2dLayer> down_convs_;
  std::vector<std::vector<Block>> stages_;
  ChannelNorm head_norm_;
  LinearLayer head_;
};

// Static layer graph of the network a config describes, built without
// instantiating weights.
LayerGraph describe_model(const ModelConfig& config);

}  // namespace edgeear
