// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "edgeear/parameter.hpp"
#include "edgeear/tensor.hpp"

namespace edgeear {

// Training-time classifier over identities, bias-free. Weight: [K x D].
class ClassificationHead {
 public:
  enum class Mode { Linear, Cosine };

  ClassificationHead(std::size_t classes, std::size_t embedding_dim, Mode mode, std::uint64_t seed);

  // Linear: e W^T. Cosine: normalize(e) normalize(W)^T.
  Tensor logits(const Tensor& embeddings) const;
  Tensor cosines(const Tensor& embeddings) const;

  Mode mode() const { return mode_; }
  std::size_t classes() const { return weight_.size(0); }
  const Tensor& weight() const { return weight_; }
  void collect_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor weight_;
  Mode mode_;
};

// Cross-entropy against (1 - epsilon) one-hot + epsilon / K, mean over the
// batch. Throws ContractError on bad targets or K < 2.
Tensor ce_label_smoothing(const Tensor& logits, std::span<const std::size_t> targets, double epsilon = 0.1);
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);

// Additive angular margin loss. Throws NumericError on a zero-norm
// embedding and ContractError on margin outside [0, pi/2) or scale <= 0.
Tensor arcface(const Tensor& embeddings, const ClassificationHead& head, std::span<const std::size_t> targets,
               double margin = 0.2, double scale = 8.0);

struct LossConfig {
  enum class Kind { LabelSmoothing, CrossEntropy, ArcFace };
  Kind kind = Kind::LabelSmoothing;
  double epsilon = 0.1;
  double margin = 0.2;
  double scale = 8.0;

  // ArcFace needs a cosine head; the CE variants use linear logits.
  ClassificationHead::Mode head_mode() const;
  void validate() const;
  nlohmann::json to_json() const;
  static LossConfig from_json(const nlohmann::json& j);
};

std::string to_string(LossConfig::Kind kind);

Tensor compute_loss(const LossConfig& config, const Tensor& embeddings, const ClassificationHead& head,
                    std::span<const std::size_t> targets);

}  // namespace edgeear
