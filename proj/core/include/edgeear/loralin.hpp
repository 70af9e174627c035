// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "edgeear/parameter.hpp"
#include "edgeear/tensor.hpp"

namespace edgeear {

// r = max(2, floor(gamma * min(out, in))). Throws ConfigError unless
// 0 < gamma <= 1 and both extents are positive.
std::size_t rank_for(std::size_t out_features, std::size_t in_features, double gamma);

std::size_t linear_parameter_count(std::size_t out_features, std::size_t in_features);
std::size_t loralin_parameter_count(std::size_t out_features, std::size_t in_features, double gamma);
// Full-rank count minus low-rank count; negative when factorizing costs more.
std::int64_t param_savings(std::size_t out_features, std::size_t in_features, double gamma);

// Dense y = W x + b with W: [out x in].
class LinearLayer {
 public:
  LinearLayer(std::size_t in_features, std::size_t out_features);
  LinearLayer(Tensor weight, Tensor bias);

  // x: [in x S] or [B x in x S]; returns [out x S] or [B x out x S].
  Tensor forward(const Tensor& x) const;

  std::size_t in_features() const { return weight_.size(1); }
  std::size_t out_features() const { return weight_.size(0); }
  std::size_t parameter_count() const { return weight_.numel() + bias_.numel(); }

  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

  void xavier_init(std::uint64_t seed);
  void collect_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor weight_;
  Tensor bias_;
};

// Low-rank linear layer: y = W_up (W_down x) + b with W_down: [r x in] and
// W_up: [out x r]. The inner product is always evaluated first.
class LoRaLinLayer {
 public:
  LoRaLinLayer(std::size_t in_features, std::size_t out_features, double gamma);
  // Adopts explicit factors; gamma is recorded for reporting only.
  LoRaLinLayer(Tensor down, Tensor up, Tensor bias, double gamma);

  Tensor forward(const Tensor& x) const;

  std::size_t in_features() const { return down_.size(1); }
  std::size_t out_features() const { return up_.size(0); }
  std::size_t rank() const { return down_.size(0); }
  double gamma() const { return gamma_; }
  std::size_t parameter_count() const { return down_.numel() + up_.numel() + bias_.numel(); }

  const Tensor& down() const { return down_; }
  const Tensor& up() const { return up_; }
  const Tensor& bias() const { return bias_; }

  // W_up * W_down as a dense [out x in] matrix.
  Tensor composed_weight() const;

  // Xavier-uniform on each factor with that factor's own fans; zero bias.
  void xavier_init(std::uint64_t seed);
  void collect_parameters(const std::string& prefix, ParameterList& out) const;

 private:
  Tensor down_;
  Tensor up_;
  Tensor bias_;
  double gamma_;
};

// Either kind of projection, chosen by configuration. `gamma` unset means a
// full-rank LinearLayer.
class Projection {
 public:
  Projection(std::size_t in_features, std::size_t out_features, std::optional<double> gamma);
  explicit Projection(LinearLayer layer) : impl_(std::move(layer)) {}
  explicit Projection(LoRaLinLayer layer) : impl_(std::move(layer)) {}

  Tensor forward(const Tensor& x) const;

  bool is_low_rank() const { return std::holds_alternative<LoRaLinLayer>(impl_); }
  std::optional<double> gamma() const;
  std::size_t rank() const;  // min(out, in) for a dense layer
  std::size_t in_features() const;
  std::size_t out_features() const;
  std::size_t parameter_count() const;

  const LinearLayer* as_linear() const { return std::get_if<LinearLayer>(&impl_); }
  const LoRaLinLayer* as_loralin() const { return std::get_if<LoRaLinLayer>(&impl_); }

  void xavier_init(std::uint64_t seed);
  void collect_parameters(const std::string& prefix, ParameterList& out) const;

  // {"type":"loralin","in":N,"out":M,"gamma":g} or {"type":"linear","in":N,"out":M}
  nlohmann::json to_json() const;
  static Projection from_json(const nlohmann::json& j);

 private:
  std::variant<LinearLayer, LoRaLinLayer> impl_;
};

// Fills t with U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
void xavier_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);

}  // namespace edgeear
