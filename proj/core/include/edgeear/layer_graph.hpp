// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace edgeear {

// Static description of a network as a DAG of nodes over C x H x W feature
// maps. Linear-type nodes act per spatial position.
enum class NodeKind {
  Conv2d,
  Linear,
  LoRaLin,
  LayerNorm,
  Gelu,
  ChannelAttention,  // input: fused QKV (3C channels), output: C channels
  LayerScale,
  Add,
  Slice,
  Concat,
  GlobalPool,
};

std::string to_string(NodeKind kind);
NodeKind node_kind_from_string(const std::string& s);

struct FeatureShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t positions() const { return height * width; }
  std::size_t elements() const { return channels * height * width; }
  bool operator==(const FeatureShape&) const = default;
};

struct LayerNode {
  std::string name;
  NodeKind kind = NodeKind::Linear;
  // Producer node indices; -1 is the graph input.
  std::vector<int> inputs;
  FeatureShape in;
  FeatureShape out;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  std::size_t heads = 0;
  std::size_t offset = 0;  // Slice start channel
  std::optional<double> gamma;
};

struct LayerGraph {
  FeatureShape input;
  std::vector<LayerNode> nodes;

  // Checks that every node's declared output follows from its parameters and
  // that its declared input matches its producers. Throws AnalysisError.
  void validate() const;

  nlohmann::json to_json() const;
  static LayerGraph from_json(const nlohmann::json& j);
};

// Appends nodes while tracking shapes; each call returns the new node index.
class GraphBuilder {
 public:
  explicit GraphBuilder(FeatureShape input) { graph_.input = input; }

  const FeatureShape& shape_of(int node) const;

  int conv2d(const std::string& name, int input, std::size_t out_channels, std::size_t kernel, std::size_t stride,
             std::size_t padding, std::size_t groups);
  // Dense when gamma is unset, low-rank otherwise.
  int projection(const std::string& name, int input, std::size_t out_features, std::optional<double> gamma);
  int layer_norm(const std::string& name, int input);
  int gelu(const std::string& name, int input);
  int channel_attention(const std::string& name, int qkv_input, std::size_t heads);
  int layer_scale(const std::string& name, int input);
  int add(const std::string& name, int lhs, int rhs);
  int slice(const std::string& name, int input, std::size_t offset, std::size_t length);
  int concat(const std::string& name, const std::vector<int>& inputs);
  int global_pool(const std::string& name, int input);

  LayerGraph build() && { return std::move(graph_); }

 private:
  int push(LayerNode node);
  LayerGraph graph_;
};

}  // namespace edgeear
