// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgeear/layer_graph.hpp"
#include "edgeear/model_config.hpp"

namespace edgeear {

// Per-node cost. FLOPs = 2 * MAdds + elementwise surcharge (norms,
// activations, softmax, residual adds, scales, pooling). Bias additions are
// not counted.
struct LayerCost {
  std::string name;
  NodeKind kind = NodeKind::Linear;
  std::uint64_t params = 0;
  std::uint64_t madds = 0;
  std::uint64_t elementwise_flops = 0;

  std::uint64_t flops() const { return 2 * madds + elementwise_flops; }
};

struct ComplexityReport {
  std::size_t input_size = 0;
  std::uint64_t total_params = 0;
  std::uint64_t madds = 0;
  std::uint64_t flops = 0;
  std::uint64_t elementwise_flops = 0;
  // Training-time classifier (classes x embedding, no bias) reported
  // separately; zero when no class count was given.
  std::size_t classifier_classes = 0;
  std::uint64_t classifier_params = 0;
  std::uint64_t classifier_madds = 0;
  std::vector<LayerCost> layers;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

LayerCost node_cost(const LayerNode& node);

std::uint64_t count_params(const LayerGraph& graph);
std::uint64_t count_madds(const LayerGraph& graph);
ComplexityReport analyze(const LayerGraph& graph, std::size_t classifier_classes = 0,
                         std::size_t embedding_dim = 0);
ComplexityReport analyze(const ModelConfig& config, std::size_t classifier_classes = 0);

// Largest gamma on the 0.01 grid whose non-selective instantiation of
// `template_config` has at most `budget` parameters. Throws AnalysisError
// when even gamma = 0.01 exceeds the budget.
double gamma_for_budget(const ModelConfig& template_config, std::uint64_t budget);

}  // namespace edgeear
