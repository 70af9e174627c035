// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

namespace edgeear {

// Declarative backbone description. Stages are numbered 1..4; each stage
// listed in `sdta_stages` ends with one SDTA encoder, every other block is a
// convolutional encoder.
struct ModelConfig {
  std::array<std::size_t, 4> stage_depths{3, 3, 9, 3};
  std::array<std::size_t, 4> stage_dims{40, 56, 96, 192};
  std::array<std::size_t, 4> kernel_sizes{3, 5, 7, 9};
  std::array<std::size_t, 4> num_heads{4, 4, 4, 4};
  // Channel groups of the hierarchical depthwise convolutions in SDTA.
  std::array<std::size_t, 4> splits{2, 2, 3, 4};
  std::set<std::size_t> sdta_stages{4};

  // Selective mode: only the Stage-4 SDTA encoder is factorized, QKV at
  // qkv_gamma and both MLP projections at mlp_gamma. Non-selective mode:
  // every block projection uses global_gamma.
  bool selective = true;
  std::optional<double> qkv_gamma = 0.5;
  std::optional<double> mlp_gamma = 0.6;
  std::optional<double> global_gamma;

  std::size_t embedding_dim = 512;
  std::size_t input_size = 128;
  std::size_t in_channels = 3;
  // Initial value of the per-channel residual branch scales.
  double layer_scale_init = 1e-6;

  // Throws ConfigError naming the offending field.
  void validate() const;

  // Rank ratio of a block projection, or nullopt for full rank.
  enum class Slot { AttentionQkv, AttentionProj, MlpExpand, MlpContract, ConvExpand, ConvContract };
  std::optional<double> gamma_for(std::size_t stage, Slot slot) const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static ModelConfig from_json(const nlohmann::json& j);

  // Default EdgeEar configuration (~1.98M parameters at 128x128).
  static ModelConfig edgeear();
  // Desk-scale variant with widths [8, 16, 24, 32].
  static ModelConfig tiny();
  // Non-selective template: EdgeNeXt-XS widths, SDTA in stages 2-4, every
  // block projection at `gamma`.
  static ModelConfig edgeface(double gamma);
  // Looks up "edgeear", "tiny" or "edgeface-<gamma>".
  static ModelConfig preset(const std::string& name);
};

}  // namespace edgeear
