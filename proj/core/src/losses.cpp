// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/losses.hpp"

#include <cmath>
#include <numbers>

#include "edgeear/error.hpp"
#include "edgeear/loralin.hpp"
#include "edgeear/ops.hpp"

namespace edgeear {

namespace {

void check_targets(const Tensor& logits, std::span<const std::size_t> targets) {
  if (logits.rank() != 2) throw ContractError("logits must be [B x K], got " + shape_str(logits.shape()));
  const std::size_t k = logits.size(1);
  if (k < 2) throw ContractError("need at least two classes");
  if (targets.size() != logits.size(0)) {
    throw ContractError("got " + std::to_string(targets.size()) + " targets for a batch of " +
                        std::to_string(logits.size(0)));
  }
  for (std::size_t t : targets) {
    if (t >= k) throw ContractError("target " + std::to_string(t) + " outside [0, " + std::to_string(k) + ")");
  }
}

}  // namespace

ClassificationHead::ClassificationHead(std::size_t classes, std::size_t embedding_dim, Mode mode, std::uint64_t seed)
    : weight_({classes, embedding_dim}, true), mode_(mode) {
  xavier_uniform(weight_, embedding_dim, classes, seed);
}

Tensor ClassificationHead::cosines(const Tensor& embeddings) const {
  return matmul(l2_normalize(embeddings, 1), transpose_last(l2_normalize(weight_, 1)));
}

Tensor ClassificationHead::logits(const Tensor& embeddings) const {
  if (mode_ == Mode::Cosine) return cosines(embeddings);
  return matmul(embeddings, transpose_last(weight_));
}

void ClassificationHead::collect_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({join_name(prefix, "weight"), weight_, true});
}

Tensor ce_label_smoothing(const Tensor& logits, std::span<const std::size_t> targets, double epsilon) {
  check_targets(logits, targets);
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ContractError("label smoothing must lie in [0, 1)");
  const std::size_t b = logits.size(0);
  const std::size_t k = logits.size(1);
  Tensor q = Tensor::full({b, k}, epsilon / static_cast<double>(k));
  auto qv = q.mutable_values();
  for (std::size_t i = 0; i < b; ++i) qv[i * k + targets[i]] += 1.0 - epsilon;
  return scale(sum(mul(q, log_softmax(logits, 1))), -1.0 / static_cast<double>(b));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  return ce_label_smoothing(logits, targets, 0.0);
}

Tensor arcface(const Tensor& embeddings, const ClassificationHead& head, std::span<const std::size_t> targets,
               double margin, double scale_factor) {
  if (!(margin >= 0.0 && margin < std::numbers::pi / 2)) throw ContractError("arcface margin must lie in [0, pi/2)");
  if (!(scale_factor > 0.0)) throw ContractError("arcface scale must be positive");
  if (embeddings.rank() != 2) throw ContractError("embeddings must be [B x D]");
  const std::size_t d = embeddings.size(1);
  const auto v = embeddings.values();
  for (std::size_t i = 0; i < embeddings.size(0); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += v[i * d + j] * v[i * d + j];
    if (!(sq > 0.0)) throw NumericError("arcface: embedding " + std::to_string(i) + " has zero norm");
  }
  const Tensor cos = head.cosines(embeddings);
  check_targets(cos, targets);
  return cross_entropy(scale(arc_margin(cos, targets, margin), scale_factor), targets);
}

ClassificationHead::Mode LossConfig::head_mode() const {
  return kind == Kind::ArcFace ? ClassificationHead::Mode::Cosine : ClassificationHead::Mode::Linear;
}

void LossConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("loss.epsilon: must lie in [0, 1)");
  if (!(margin >= 0.0 && margin < std::numbers::pi / 2)) throw ConfigError("loss.margin: must lie in [0, pi/2)");
  if (!(scale > 0.0)) throw ConfigError("loss.scale: must be positive");
}

std::string to_string(LossConfig::Kind kind) {
  switch (kind) {
    case LossConfig::Kind::LabelSmoothing:
      return "ce_label_smoothing";
    case LossConfig::Kind::CrossEntropy:
      return "ce";
    case LossConfig::Kind::ArcFace:
      return "arcface";
  }
  return "?";
}

nlohmann::json LossConfig::to_json() const {
  return {{"kind", to_string(kind)}, {"epsilon", epsilon}, {"margin", margin}, {"scale", scale}};
}

LossConfig LossConfig::from_json(const nlohmann::json& j) {
  LossConfig c;
  if (!j.is_object()) throw ConfigError("loss: expected a table");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "kind") {
        const auto s = value.get<std::string>();
        if (s == "ce_label_smoothing") {
          c.kind = Kind::LabelSmoothing;
        } else if (s == "ce") {
          c.kind = Kind::CrossEntropy;
        } else if (s == "arcface") {
          c.kind = Kind::ArcFace;
        } else {
          throw ConfigError("loss.kind: unknown loss '" + s + "' (ce_label_smoothing, ce, arcface)");
        }
      } else if (key == "epsilon") {
        c.epsilon = value.get<double>();
      } else if (key == "margin") {
        c.margin = value.get<double>();
      } else if (key == "scale") {
        c.scale = value.get<double>();
      } else {
        throw ConfigError("loss." + key + ": unknown key");
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("loss." + key + ": wrong type");
    }
  }
  c.validate();
  return c;
}

Tensor compute_loss(const LossConfig& config, const Tensor& embeddings, const ClassificationHead& head,
                    std::span<const std::size_t> targets) {
  switch (config.kind) {
    case LossConfig::Kind::LabelSmoothing:
      return ce_label_smoothing(head.logits(embeddings), targets, config.epsilon);
    case LossConfig::Kind::CrossEntropy:
      return cross_entropy(head.logits(embeddings), targets);
    case LossConfig::Kind::ArcFace:
      return arcface(embeddings, head, targets, config.margin, config.scale);
  }
  throw ContractError("unknown loss kind");
}

}  // namespace edgeear
