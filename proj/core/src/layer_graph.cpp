// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/layer_graph.hpp"

#include <array>
#include <utility>

#include "edgeear/error.hpp"
#include "edgeear/loralin.hpp"

namespace edgeear {

namespace {

constexpr std::array<std::pair<NodeKind, const char*>, 11> kKindNames{{
    {NodeKind::Conv2d, "conv2d"},
    {NodeKind::Linear, "linear"},
    {NodeKind::LoRaLin, "loralin"},
    {NodeKind::LayerNorm, "layernorm"},
    {NodeKind::Gelu, "gelu"},
    {NodeKind::ChannelAttention, "channel_attention"},
    {NodeKind::LayerScale, "layer_scale"},
    {NodeKind::Add, "add"},
    {NodeKind::Slice, "slice"},
    {NodeKind::Concat, "concat"},
    {NodeKind::GlobalPool, "global_pool"},
}};

nlohmann::json shape_json(const FeatureShape& s) { return {s.channels, s.height, s.width}; }

FeatureShape shape_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw AnalysisError("feature shape must be [C, H, W]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

// Output shape implied by a node's parameters and its declared input.
FeatureShape implied_output(const LayerNode& n, const std::vector<FeatureShape>& producers) {
  const FeatureShape& in = n.in;
  switch (n.kind) {
    case NodeKind::Conv2d: {
      if (n.kernel == 0 || n.stride == 0 || n.groups == 0 || in.channels % n.groups != 0 ||
          n.out.channels % n.groups != 0 || in.height + 2 * n.padding < n.kernel ||
          in.width + 2 * n.padding < n.kernel) {
        throw AnalysisError("node '" + n.name + "': inconsistent conv2d geometry");
      }
      return {n.out.channels, (in.height + 2 * n.padding - n.kernel) / n.stride + 1,
              (in.width + 2 * n.padding - n.kernel) / n.stride + 1};
    }
    case NodeKind::Linear:
    case NodeKind::LoRaLin:
      return {n.out.channels, in.height, in.width};
    case NodeKind::LayerNorm:
    case NodeKind::Gelu:
    case NodeKind::LayerScale:
      return in;
    case NodeKind::ChannelAttention: {
      if (in.channels % 3 != 0 || n.heads == 0 || (in.channels / 3) % n.heads != 0) {
        throw AnalysisError("node '" + n.name + "': attention needs 3C input channels divisible by heads");
      }
      return {in.channels / 3, in.height, in.width};
    }
    case NodeKind::Add:
      for (const auto& p : producers) {
        if (!(p == in)) throw AnalysisError("node '" + n.name + "': add operands differ in shape");
      }
      return in;
    case NodeKind::Slice:
      if (n.offset + n.out.channels > in.channels || n.out.channels == 0) {
        throw AnalysisError("node '" + n.name + "': slice outside input channels");
      }
      return {n.out.channels, in.height, in.width};
    case NodeKind::Concat: {
      FeatureShape s{0, in.height, in.width};
      for (const auto& p : producers) {
        if (p.height != in.height || p.width != in.width) {
          throw AnalysisError("node '" + n.name + "': concat operands differ spatially");
        }
        s.channels += p.channels;
      }
      return s;
    }
    case NodeKind::GlobalPool:
      return {in.channels, 1, 1};
  }
  throw AnalysisError("node '" + n.name + "': unknown node kind");
}

}  // namespace

std::string to_string(NodeKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  throw AnalysisError("unknown node kind");
}

NodeKind node_kind_from_string(const std::string& s) {
  for (const auto& [k, name] : kKindNames)
    if (s == name) return k;
  throw AnalysisError("unknown node kind '" + s + "'");
}

void LayerGraph::validate() const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const LayerNode& n = nodes[i];
    if (n.inputs.empty()) throw AnalysisError("node '" + n.name + "' has no inputs");
    std::vector<FeatureShape> producers;
    for (int p : n.inputs) {
      if (p >= static_cast<int>(i) || p < -1) {
        throw AnalysisError("node '" + n.name + "' refers to a later or invalid producer");
      }
      producers.push_back(p < 0 ? input : nodes[static_cast<std::size_t>(p)].out);
    }
    if (n.kind != NodeKind::Concat && !(producers.front() == n.in)) {
      throw AnalysisError("node '" + n.name + "': declared input does not match its producer");
    }
    if (n.kind == NodeKind::LoRaLin && !n.gamma) throw AnalysisError("node '" + n.name + "': loralin without gamma");
    if (!(implied_output(n, producers) == n.out)) {
      throw AnalysisError("node '" + n.name + "': declared output does not follow from its input");
    }
  }
}

nlohmann::json LayerGraph::to_json() const {
  nlohmann::json j;
  j["input"] = shape_json(input);
  j["nodes"] = nlohmann::json::array();
  for (const auto& n : nodes) {
    nlohmann::json e{{"name", n.name}, {"kind", to_string(n.kind)}, {"inputs", n.inputs},
                     {"in", shape_json(n.in)}, {"out", shape_json(n.out)}};
    if (n.kind == NodeKind::Conv2d) {
      e["kernel"] = n.kernel;
      e["stride"] = n.stride;
      e["padding"] = n.padding;
      e["groups"] = n.groups;
    }
    if (n.kind == NodeKind::ChannelAttention) e["heads"] = n.heads;
    if (n.kind == NodeKind::Slice) e["offset"] = n.offset;
    if (n.gamma) e["gamma"] = *n.gamma;
    j["nodes"].push_back(std::move(e));
  }
  return j;
}

LayerGraph LayerGraph::from_json(const nlohmann::json& j) {
  LayerGraph g;
  try {
    g.input = shape_from_json(j.at("input"));
    for (const auto& e : j.at("nodes")) {
      LayerNode n;
      n.name = e.at("name").get<std::string>();
      n.kind = node_kind_from_string(e.at("kind").get<std::string>());
      n.inputs = e.at("inputs").get<std::vector<int>>();
      n.in = shape_from_json(e.at("in"));
      n.out = shape_from_json(e.at("out"));
      n.kernel = e.value("kernel", std::size_t{0});
      n.stride = e.value("stride", std::size_t{1});
      n.padding = e.value("padding", std::size_t{0});
      n.groups = e.value("groups", std::size_t{1});
      n.heads = e.value("heads", std::size_t{0});
      n.offset = e.value("offset", std::size_t{0});
      if (e.contains("gamma")) n.gamma = e.at("gamma").get<double>();
      g.nodes.push_back(std::move(n));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw AnalysisError(std::string("malformed layer graph: ") + ex.what());
  }
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------

const FeatureShape& GraphBuilder::shape_of(int node) const {
  return node < 0 ? graph_.input : graph_.nodes.at(static_cast<std::size_t>(node)).out;
}

int GraphBuilder::push(LayerNode node) {
  graph_.nodes.push_back(std::move(node));
  return static_cast<int>(graph_.nodes.size()) - 1;
}

namespace {

LayerNode make_node(std::string name, NodeKind kind, std::vector<int> inputs, const FeatureShape& in) {
  LayerNode n;
  n.name = std::move(name);
  n.kind = kind;
  n.inputs = std::move(inputs);
  n.in = in;
  n.out = in;
  return n;
}

}  // namespace

int GraphBuilder::conv2d(const std::string& name, int input, std::size_t out_channels, std::size_t kernel,
                         std::size_t stride, std::size_t padding, std::size_t groups) {
  LayerNode n = make_node(name, NodeKind::Conv2d, {input}, shape_of(input));
  n.kernel = kernel;
  n.stride = stride;
  n.padding = padding;
  n.groups = groups;
  n.out.channels = out_channels;
  n.out = implied_output(n, {n.in});
  return push(std::move(n));
}

int GraphBuilder::projection(const std::string& name, int input, std::size_t out_features,
                             std::optional<double> gamma) {
  LayerNode n = make_node(name, gamma ? NodeKind::LoRaLin : NodeKind::Linear, {input}, shape_of(input));
  n.gamma = gamma;
  n.out.channels = out_features;
  return push(std::move(n));
}

int GraphBuilder::layer_norm(const std::string& name, int input) {
  return push(make_node(name, NodeKind::LayerNorm, {input}, shape_of(input)));
}

int GraphBuilder::gelu(const std::string& name, int input) {
  return push(make_node(name, NodeKind::Gelu, {input}, shape_of(input)));
}

int GraphBuilder::channel_attention(const std::string& name, int qkv_input, std::size_t heads) {
  LayerNode n = make_node(name, NodeKind::ChannelAttention, {qkv_input}, shape_of(qkv_input));
  n.heads = heads;
  n.out = implied_output(n, {n.in});
  return push(std::move(n));
}

int GraphBuilder::layer_scale(const std::string& name, int input) {
  return push(make_node(name, NodeKind::LayerScale, {input}, shape_of(input)));
}

int GraphBuilder::add(const std::string& name, int lhs, int rhs) {
  return push(make_node(name, NodeKind::Add, {lhs, rhs}, shape_of(lhs)));
}

int GraphBuilder::slice(const std::string& name, int input, std::size_t offset, std::size_t length) {
  LayerNode n = make_node(name, NodeKind::Slice, {input}, shape_of(input));
  n.offset = offset;
  n.out.channels = length;
  return push(std::move(n));
}

int GraphBuilder::concat(const std::string& name, const std::vector<int>& inputs) {
  LayerNode n = make_node(name, NodeKind::Concat, inputs, shape_of(inputs.front()));
  std::vector<FeatureShape> producers;
  for (int p : inputs) producers.push_back(shape_of(p));
  n.out = implied_output(n, producers);
  return push(std::move(n));
}

int GraphBuilder::global_pool(const std::string& name, int input) {
  LayerNode n = make_node(name, NodeKind::GlobalPool, {input}, shape_of(input));
  n.out = {n.in.channels, 1, 1};
  return push(std::move(n));
}

}  // namespace edgeear
