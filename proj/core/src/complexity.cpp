// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/complexity.hpp"

#include <cstdio>
#include <sstream>

#include "edgeear/backbone.hpp"
#include "edgeear/error.hpp"
#include "edgeear/loralin.hpp"

namespace edgeear {

namespace {

// Elementwise FLOPs per output element of the cheap ops.
constexpr std::uint64_t kLayerNormFlops = 5;  // mean, centre, square, scale, shift
constexpr std::uint64_t kGeluFlops = 1;
constexpr std::uint64_t kSoftmaxFlops = 4;  // temperature, exp, sum, divide
constexpr std::uint64_t kL2NormFlops = 3;
constexpr std::uint64_t kScaleFlops = 1;
constexpr std::uint64_t kAddFlops = 1;
constexpr std::uint64_t kPoolFlops = 1;

std::string millions(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f M", static_cast<double>(v) / 1e6);
  return buf;
}

}  // namespace

LayerCost node_cost(const LayerNode& n) {
  LayerCost c{.name = n.name, .kind = n.kind};
  const std::uint64_t S = n.out.positions();
  const std::uint64_t in_c = n.in.channels;
  const std::uint64_t out_c = n.out.channels;
  switch (n.kind) {
    case NodeKind::Conv2d: {
      const std::uint64_t k2 = static_cast<std::uint64_t>(n.kernel) * n.kernel;
      c.params = k2 * (in_c / n.groups) * out_c + out_c;
      c.madds = k2 * (in_c / n.groups) * out_c * S;
      break;
    }
    case NodeKind::Linear:
      c.params = linear_parameter_count(out_c, in_c);
      c.madds = in_c * out_c * S;
      break;
    case NodeKind::LoRaLin: {
      if (!n.gamma) throw AnalysisError("node '" + n.name + "': loralin without gamma");
      const std::uint64_t r = rank_for(out_c, in_c, *n.gamma);
      c.params = loralin_parameter_count(out_c, in_c, *n.gamma);
      c.madds = (r * in_c + out_c * r) * S;
      break;
    }
    case NodeKind::LayerNorm:
      c.params = 2 * in_c;
      c.elementwise_flops = kLayerNormFlops * n.out.elements();
      break;
    case NodeKind::Gelu:
      c.elementwise_flops = kGeluFlops * n.out.elements();
      break;
    case NodeKind::ChannelAttention: {
      const std::uint64_t h = n.heads;
      const std::uint64_t hd = out_c / h;
      c.params = h;  // temperature
      // q k^T and attn v, each (hd x hd) x S per head.
      c.madds = 2 * h * hd * hd * S;
      c.elementwise_flops = kL2NormFlops * 2 * out_c * S + kSoftmaxFlops * h * hd * hd;
      break;
    }
    case NodeKind::LayerScale:
      c.params = out_c;
      c.elementwise_flops = kScaleFlops * n.out.elements();
      break;
    case NodeKind::Add:
      c.elementwise_flops = kAddFlops * n.out.elements();
      break;
    case NodeKind::Slice:
    case NodeKind::Concat:
      break;
    case NodeKind::GlobalPool:
      c.elementwise_flops = kPoolFlops * n.in.elements();
      break;
    default:
      throw AnalysisError("node '" + n.name + "': unknown node kind");
  }
  return c;
}

std::uint64_t count_params(const LayerGraph& graph) {
  std::uint64_t total = 0;
  for (const auto& n : graph.nodes) total += node_cost(n).params;
  return total;
}

std::uint64_t count_madds(const LayerGraph& graph) {
  if (graph.input.positions() == 0) throw AnalysisError("graph input resolution is not set");
  std::uint64_t total = 0;
  for (const auto& n : graph.nodes) total += node_cost(n).madds;
  return total;
}

ComplexityReport analyze(const LayerGraph& graph, std::size_t classifier_classes, std::size_t embedding_dim) {
  graph.validate();
  if (graph.input.positions() == 0) throw AnalysisError("graph input resolution is not set");
  ComplexityReport r;
  r.input_size = graph.input.height;
  for (const auto& n : graph.nodes) {
    LayerCost c = node_cost(n);
    r.total_params += c.params;
    r.madds += c.madds;
    r.elementwise_flops += c.elementwise_flops;
    r.flops += c.flops();
    r.layers.push_back(std::move(c));
  }
  if (classifier_classes > 0) {
    if (embedding_dim == 0) {
      if (graph.nodes.empty()) throw AnalysisError("empty graph");
      embedding_dim = graph.nodes.back().out.channels;
    }
    r.classifier_classes = classifier_classes;
    r.classifier_params = static_cast<std::uint64_t>(classifier_classes) * embedding_dim;
    r.classifier_madds = r.classifier_params;
  }
  return r;
}

ComplexityReport analyze(const ModelConfig& config, std::size_t classifier_classes) {
  return analyze(describe_model(config), classifier_classes, config.embedding_dim);
}

double gamma_for_budget(const ModelConfig& template_config, std::uint64_t budget) {
  ModelConfig cfg = template_config;
  cfg.selective = false;
  cfg.qkv_gamma.reset();
  cfg.mlp_gamma.reset();
  for (int step = 100; step >= 1; --step) {
    const double gamma = step / 100.0;
    cfg.global_gamma = gamma;
    if (count_params(describe_model(cfg)) <= budget) return gamma;
  }
  throw AnalysisError("parameter budget " + std::to_string(budget) + " is below the count at gamma = 0.01");
}

nlohmann::json ComplexityReport::to_json() const {
  nlohmann::json j{{"input_size", input_size},
                   {"params", total_params},
                   {"madds", madds},
                   {"flops", flops},
                   {"elementwise_flops", elementwise_flops}};
  if (classifier_classes > 0) {
    j["classifier"] = {{"classes", classifier_classes},
                       {"params", classifier_params},
                       {"madds", classifier_madds},
                       {"params_with_classifier", total_params + classifier_params},
                       {"madds_with_classifier", madds + classifier_madds}};
  }
  j["layers"] = nlohmann::json::array();
  for (const auto& l : layers) {
    j["layers"].push_back({{"name", l.name},
                           {"kind", to_string(l.kind)},
                           {"params", l.params},
                           {"madds", l.madds},
                           {"flops", l.flops()}});
  }
  return j;
}

std::string ComplexityReport::to_text() const {
  std::ostringstream os;
  os << "input        " << input_size << "x" << input_size << "\n"
     << "params       " << total_params << " (" << millions(total_params) << ")\n"
     << "madds        " << madds << " (" << millions(madds) << ")\n"
     << "flops        " << flops << " (" << millions(flops) << ", elementwise " << elementwise_flops << ")\n";
  if (classifier_classes > 0) {
    os << "classifier   " << classifier_classes << " classes, " << classifier_params << " params, "
       << classifier_madds << " madds\n";
  }
  os << "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-40s %-18s %12s %14s\n", "layer", "kind", "params", "madds");
  os << line;
  for (const auto& l : layers) {
    if (l.params == 0 && l.madds == 0) continue;
    std::snprintf(line, sizeof line, "%-40s %-18s %12llu %14llu\n", l.name.c_str(), to_string(l.kind).c_str(),
                  static_cast<unsigned long long>(l.params), static_cast<unsigned long long>(l.madds));
    os << line;
  }
  return os.str();
}

}  // namespace edgeear
