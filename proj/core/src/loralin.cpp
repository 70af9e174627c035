// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/loralin.hpp"

#include <algorithm>
#include <cmath>

#include "edgeear/error.hpp"
#include "edgeear/ops.hpp"
#include "edgeear/rng.hpp"

namespace edgeear {

namespace {

// gamma * extent is evaluated in binary floating point, so products such as
// 0.29 * 100 come out just below the integer they denote. The slack keeps
// the floor faithful to the decimal ratio.
constexpr double kFloorSlack = 1e-9;

Tensor apply_dense(const Tensor& w, const Tensor& x) {
  if (x.rank() == 2) return matmul(w, x);
  if (x.rank() == 3) return channel_matmul(w, x);
  throw DimensionError("linear input must be [N x S] or [B x N x S], got " + shape_str(x.shape()));
}

Tensor add_bias(const Tensor& y, const Tensor& b) { return axis_add(y, b, static_cast<int>(y.rank()) - 2); }

void check_input(const Tensor& x, std::size_t in_features) {
  if (x.rank() < 2 || x.size(-2) != in_features) {
    throw DimensionError("linear layer expects leading feature extent " + std::to_string(in_features) +
                         ", got input " + shape_str(x.shape()));
  }
}

}  // namespace

std::size_t rank_for(std::size_t out_features, std::size_t in_features, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ConfigError("rank ratio gamma must lie in (0, 1], got " + std::to_string(gamma));
  }
  if (out_features == 0 || in_features == 0) throw ConfigError("linear extents must be positive");
  const double m = static_cast<double>(std::min(out_features, in_features));
  const auto r = static_cast<std::size_t>(std::floor(gamma * m + kFloorSlack));
  return std::max<std::size_t>(2, r);
}

std::size_t linear_parameter_count(std::size_t out_features, std::size_t in_features) {
  return out_features * in_features + out_features;
}

std::size_t loralin_parameter_count(std::size_t out_features, std::size_t in_features, double gamma) {
  const std::size_t r = rank_for(out_features, in_features, gamma);
  return r * in_features + out_features * r + out_features;
}

std::int64_t param_savings(std::size_t out_features, std::size_t in_features, double gamma) {
  return static_cast<std::int64_t>(linear_parameter_count(out_features, in_features)) -
         static_cast<std::int64_t>(loralin_parameter_count(out_features, in_features, gamma));
}

void xavier_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::uint64_t seed) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Rng rng(seed);
  for (double& v : t.mutable_values()) v = rng.uniform(-bound, bound);
}

// ---------------------------------------------------------------------------

LinearLayer::LinearLayer(std::size_t in_features, std::size_t out_features)
    : weight_({out_features, in_features}, true), bias_({out_features}, true) {
  if (in_features == 0 || out_features == 0) throw ConfigError("linear extents must be positive");
}

LinearLayer::LinearLayer(Tensor weight, Tensor bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.rank() != 2 || bias_.numel() != weight_.size(0)) {
    throw DimensionError("linear weight " + shape_str(weight_.shape()) + " and bias " +
                         shape_str(bias_.shape()) + " disagree");
  }
}

Tensor LinearLayer::forward(const Tensor& x) const {
  check_input(x, in_features());
  return add_bias(apply_dense(weight_, x), bias_);
}

void LinearLayer::xavier_init(std::uint64_t seed) {
  xavier_uniform(weight_, in_features(), out_features(), seed);
  std::fill(bias_.mutable_values().begin(), bias_.mutable_values().end(), 0.0);
}

void LinearLayer::collect_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({join_name(prefix, "weight"), weight_, true});
  out.push_back({join_name(prefix, "bias"), bias_, false});
}

// ---------------------------------------------------------------------------

LoRaLinLayer::LoRaLinLayer(std::size_t in_features, std::size_t out_features, double gamma)
    : down_({rank_for(out_features, in_features, gamma), in_features}, true),
      up_({out_features, rank_for(out_features, in_features, gamma)}, true),
      bias_({out_features}, true),
      gamma_(gamma) {}

LoRaLinLayer::LoRaLinLayer(Tensor down, Tensor up, Tensor bias, double gamma)
    : down_(std::move(down)), up_(std::move(up)), bias_(std::move(bias)), gamma_(gamma) {
  if (down_.rank() != 2 || up_.rank() != 2 || up_.size(1) != down_.size(0) || bias_.numel() != up_.size(0)) {
    throw DimensionError("low-rank factors " + shape_str(down_.shape()) + ", " + shape_str(up_.shape()) +
                         " and bias " + shape_str(bias_.shape()) + " disagree");
  }
}

Tensor LoRaLinLayer::forward(const Tensor& x) const {
  check_input(x, in_features());
  const Tensor inner = apply_dense(down_, x);
  return add_bias(apply_dense(up_, inner), bias_);
}

Tensor LoRaLinLayer::composed_weight() const { return matmul(up_.detach(), down_.detach()); }

void LoRaLinLayer::xavier_init(std::uint64_t seed) {
  xavier_uniform(down_, in_features(), rank(), seed);
  xavier_uniform(up_, rank(), out_features(), seed ^ 0x5bd1e995u);
  std::fill(bias_.mutable_values().begin(), bias_.mutable_values().end(), 0.0);
}

void LoRaLinLayer::collect_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({join_name(prefix, "down"), down_, true});
  out.push_back({join_name(prefix, "up"), up_, true});
  out.push_back({join_name(prefix, "bias"), bias_, false});
}

// ---------------------------------------------------------------------------

namespace {
std::variant<LinearLayer, LoRaLinLayer> make_projection(std::size_t in, std::size_t out, std::optional<double> g) {
  if (g) return LoRaLinLayer(in, out, *g);
  return LinearLayer(in, out);
}
}  // namespace

Projection::Projection(std::size_t in_features, std::size_t out_features, std::optional<double> gamma)
    : impl_(make_projection(in_features, out_features, gamma)) {}

Tensor Projection::forward(const Tensor& x) const {
  return std::visit([&](const auto& layer) { return layer.forward(x); }, impl_);
}

std::optional<double> Projection::gamma() const {
  if (const auto* l = as_loralin()) return l->gamma();
  return std::nullopt;
}

std::size_t Projection::rank() const {
  if (const auto* l = as_loralin()) return l->rank();
  return std::min(in_features(), out_features());
}

std::size_t Projection::in_features() const {
  return std::visit([](const auto& layer) { return layer.in_features(); }, impl_);
}

std::size_t Projection::out_features() const {
  return std::visit([](const auto& layer) { return layer.out_features(); }, impl_);
}

std::size_t Projection::parameter_count() const {
  return std::visit([](const auto& layer) { return layer.parameter_count(); }, impl_);
}

void Projection::xavier_init(std::uint64_t seed) {
  std::visit([seed](auto& layer) { layer.xavier_init(seed); }, impl_);
}

void Projection::collect_parameters(const std::string& prefix, ParameterList& out) const {
  std::visit([&](const auto& layer) { layer.collect_parameters(prefix, out); }, impl_);
}

nlohmann::json Projection::to_json() const {
  nlohmann::json j{{"in", in_features()}, {"out", out_features()}};
  if (const auto* l = as_loralin()) {
    j["type"] = "loralin";
    j["gamma"] = l->gamma();
  } else {
    j["type"] = "linear";
  }
  return j;
}

Projection Projection::from_json(const nlohmann::json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    const auto in = j.at("in").get<std::size_t>();
    const auto out = j.at("out").get<std::size_t>();
    if (type == "loralin") return Projection(in, out, j.at("gamma").get<double>());
    if (type == "linear") return Projection(in, out, std::nullopt);
    throw ConfigError("unknown projection type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad projection entry: ") + e.what());
  }
}

}  // namespace edgeear
