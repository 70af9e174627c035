// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/model_config.hpp"

#include <cmath>
#include <string>

#include "edgeear/error.hpp"

namespace edgeear {

namespace {

void fail(const std::string& field, const std::string& why) { throw ConfigError("model." + field + ": " + why); }

void check_gamma(const std::string& field, const std::optional<double>& g) {
  if (g && !(*g > 0.0 && *g <= 1.0)) fail(field, "rank ratio must lie in (0, 1], got " + std::to_string(*g));
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

void ModelConfig::validate() const {
  for (std::size_t s = 0; s < 4; ++s) {
    const std::string idx = "[" + std::to_string(s) + "]";
    if (stage_depths[s] == 0) fail("stage_depths" + idx, "every stage needs at least one block");
    if (stage_dims[s] == 0) fail("stage_dims" + idx, "width must be positive");
    if (kernel_sizes[s] == 0 || kernel_sizes[s] % 2 == 0) fail("kernel_sizes" + idx, "kernel must be odd");
  }
  for (std::size_t stage : sdta_stages) {
    if (stage < 1 || stage > 4) fail("sdta_stages", "stage numbers are 1..4, got " + std::to_string(stage));
    const std::size_t s = stage - 1;
    const std::string idx = "[" + std::to_string(s) + "]";
    const std::size_t d = stage_dims[s];
    if (num_heads[s] == 0 || d % num_heads[s] != 0) {
      fail("num_heads" + idx, "must divide stage width " + std::to_string(d));
    }
    if (splits[s] < 2 || splits[s] > d || ceil_div(d, ceil_div(d, splits[s])) != splits[s]) {
      fail("splits" + idx, "cannot split width " + std::to_string(d) + " into " + std::to_string(splits[s]) +
                               " channel groups");
    }
  }
  check_gamma("qkv_gamma", qkv_gamma);
  check_gamma("mlp_gamma", mlp_gamma);
  check_gamma("global_gamma", global_gamma);
  if (selective) {
    if (!qkv_gamma) fail("qkv_gamma", "required in selective mode");
    if (!mlp_gamma) fail("mlp_gamma", "required in selective mode");
    if (global_gamma) fail("global_gamma", "must be unset in selective mode");
    if (!sdta_stages.contains(4)) fail("sdta_stages", "selective mode factorizes the Stage-4 SDTA encoder");
  } else if (!global_gamma) {
    fail("global_gamma", "required when selective is false");
  }
  if (embedding_dim == 0) fail("embedding_dim", "must be positive");
  if (input_size < 32 || input_size % 32 != 0) fail("input_size", "must be a positive multiple of 32");
  if (in_channels == 0) fail("in_channels", "must be positive");
  if (!std::isfinite(layer_scale_init)) fail("layer_scale_init", "must be finite");
}

std::optional<double> ModelConfig::gamma_for(std::size_t stage, Slot slot) const {
  if (!selective) return global_gamma;
  if (stage != 4 || !sdta_stages.contains(4)) return std::nullopt;
  switch (slot) {
    case Slot::AttentionQkv:
      return qkv_gamma;
    case Slot::MlpExpand:
    case Slot::MlpContract:
      return mlp_gamma;
    default:
      return std::nullopt;
  }
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j;
  j["stage_depths"] = stage_depths;
  j["stage_dims"] = stage_dims;
  j["kernel_sizes"] = kernel_sizes;
  j["num_heads"] = num_heads;
  j["splits"] = splits;
  j["sdta_stages"] = sdta_stages;
  j["selective"] = selective;
  j["qkv_gamma"] = qkv_gamma ? nlohmann::json(*qkv_gamma) : nlohmann::json(nullptr);
  j["mlp_gamma"] = mlp_gamma ? nlohmann::json(*mlp_gamma) : nlohmann::json(nullptr);
  j["global_gamma"] = global_gamma ? nlohmann::json(*global_gamma) : nlohmann::json(nullptr);
  j["embedding_dim"] = embedding_dim;
  j["input_size"] = input_size;
  j["in_channels"] = in_channels;
  j["layer_scale_init"] = layer_scale_init;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model: expected an object");
  ModelConfig c;
  if (j.contains("preset")) c = preset(j.at("preset").get<std::string>());
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const nlohmann::json::exception& e) {
      fail(key, std::string("bad value: ") + e.what());
    }
  };
  auto read_opt = [&](const char* key, std::optional<double>& field) {
    if (!j.contains(key)) return;
    if (j.at(key).is_null()) {
      field.reset();
    } else if (j.at(key).is_number()) {
      field = j.at(key).get<double>();
    } else {
      fail(key, "expected a number or null");
    }
  };
  for (const auto& [key, _] : j.items()) {
    static const std::set<std::string> kKnown{
        "preset",        "stage_depths", "stage_dims",   "kernel_sizes", "num_heads",        "splits",
        "sdta_stages",   "selective",    "qkv_gamma",    "mlp_gamma",    "global_gamma",     "embedding_dim",
        "input_size",    "in_channels",  "layer_scale_init"};
    if (!kKnown.contains(key)) fail(key, "unknown key");
  }
  read("stage_depths", c.stage_depths);
  read("stage_dims", c.stage_dims);
  read("kernel_sizes", c.kernel_sizes);
  read("num_heads", c.num_heads);
  read("splits", c.splits);
  read("sdta_stages", c.sdta_stages);
  read("selective", c.selective);
  read_opt("qkv_gamma", c.qkv_gamma);
  read_opt("mlp_gamma", c.mlp_gamma);
  read_opt("global_gamma", c.global_gamma);
  if (!c.selective) {
    if (!j.contains("qkv_gamma")) c.qkv_gamma.reset();
    if (!j.contains("mlp_gamma")) c.mlp_gamma.reset();
  }
  read("embedding_dim", c.embedding_dim);
  read("input_size", c.input_size);
  read("in_channels", c.in_channels);
  read("layer_scale_init", c.layer_scale_init);
  c.validate();
  return c;
}

ModelConfig ModelConfig::edgeear() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.stage_depths = {1, 1, 1, 2};
  c.stage_dims = {8, 16, 24, 32};
  c.kernel_sizes = {3, 3, 5, 3};
  c.num_heads = {2, 2, 2, 2};
  c.splits = {2, 2, 2, 2};
  c.layer_scale_init = 0.5;
  return c;
}

ModelConfig ModelConfig::edgeface(double gamma) {
  ModelConfig c;
  c.stage_dims = {32, 64, 100, 192};
  c.sdta_stages = {2, 3, 4};
  c.selective = false;
  c.qkv_gamma.reset();
  c.mlp_gamma.reset();
  c.global_gamma = gamma;
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "edgeear") return edgeear();
  if (name == "tiny") return tiny();
  const std::string prefix = "edgeface-";
  if (name.rfind(prefix, 0) == 0) {
    try {
      return edgeface(std::stod(name.substr(prefix.size())));
    } catch (const std::invalid_argument&) {
    }
  }
  throw ConfigError("model.preset: unknown preset '" + name + "'");
}

}  // namespace edgeear
