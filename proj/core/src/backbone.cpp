// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/backbone.hpp"

#include <algorithm>
#include <unordered_map>

#include "edgeear/error.hpp"
#include "edgeear/ops.hpp"
#include "edgeear/rng.hpp"

namespace edgeear {

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// [B x C x H x W] <-> [B x C x S] for per-position projections.
Tensor flatten_spatial(const Tensor& x) { return reshape(x, {x.size(0), x.size(1), x.size(2) * x.size(3)}); }
Tensor unflatten_spatial(const Tensor& x, std::size_t h, std::size_t w) {
  return reshape(x, {x.size(0), x.size(1), h, w});
}

Tensor pointwise(const Projection& p, const Tensor& x) {
  return unflatten_spatial(p.forward(flatten_spatial(x)), x.size(2), x.size(3));
}

void check_finite(const Tensor& t, const std::string& where) {
  if (!t.all_finite()) throw NumericError("non-finite activations after " + where);
}

std::string stage_name(std::size_t stage) { return "stages." + std::to_string(stage); }

}  // namespace

std::uint64_t InitSeeds::next() { return Rng::derive(seed_, counter_++).next_u64(); }

// ---------------------------------------------------------------------------

Conv2dLayer::Conv2dLayer(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                         std::size_t padding, std::size_t groups)
    : weight_({out_channels, in_channels / groups, kernel, kernel}, true),
      bias_({out_channels}, true),
      in_channels_(in_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      groups_(groups) {
  if (groups == 0 || in_channels % groups != 0 || out_channels % groups != 0) {
    throw ConfigError("conv2d: channels must be divisible by groups");
  }
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
  return axis_add(conv2d(x, weight_, {.stride = stride_, .padding = padding_, .groups = groups_}), bias_, 1);
}

void Conv2dLayer::xavier_init(std::uint64_t seed) {
  const std::size_t receptive = kernel_ * kernel_;
  xavier_uniform(weight_, (in_channels_ / groups_) * receptive, weight_.size(0) * receptive, seed);
  std::ranges::fill(bias_.mutable_values(), 0.0);
}

void Conv2dLayer::collect_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({join_name(prefix, "weight"), weight_, true});
  out.push_back({join_name(prefix, "bias"), bias_, false});
}

ChannelNorm::ChannelNorm(std::size_t channels) : weight_(Tensor::full({channels}, 1.0)), bias_({channels}, true) {
  weight_.set_requires_grad(true);
}

Tensor ChannelNorm::forward(const Tensor& x) const {
  return axis_add(axis_mul(layer_norm(x, 1), weight_, 1), bias_, 1);
}

void ChannelNorm::collect_parameters(const std::string& prefix, ParameterList& out) const {
  out.push_back({join_name(prefix, "weight"), weight_, false});
  out.push_back({join_name(prefix, "bias"), bias_, false});
}

// ---------------------------------------------------------------------------

ConvEncoder::ConvEncoder(std::size_t dim, std::size_t kernel, std::optional<double> expand_gamma,
                         std::optional<double> contract_gamma, double layer_scale_init)
    : dim_(dim),
      dwconv_(dim, dim, kernel, 1, kernel / 2, dim),
      norm_(dim),
      expand_(dim, 4 * dim, expand_gamma),
      contract_(4 * dim, dim, contract_gamma),
      gamma_(Tensor::full({dim}, layer_scale_init)) {
  gamma_.set_requires_grad(true);
}

Tensor ConvEncoder::forward(const Tensor& x) const {
  Tensor y = norm_.forward(dwconv_.forward(x));
  y = pointwise(contract_, gelu(pointwise(expand_, y)));
  return add(x, axis_mul(y, gamma_, 1));
}

void ConvEncoder::init(InitSeeds& seeds) {
  dwconv_.xavier_init(seeds.next());
  expand_.xavier_init(seeds.next());
  contract_.xavier_init(seeds.next());
}

void ConvEncoder::collect_parameters(const std::string& prefix, ParameterList& out) const {
  dwconv_.collect_parameters(join_name(prefix, "dwconv"), out);
  norm_.collect_parameters(join_name(prefix, "norm"), out);
  expand_.collect_parameters(join_name(prefix, "pwconv1"), out);
  contract_.collect_parameters(join_name(prefix, "pwconv2"), out);
  out.push_back({join_name(prefix, "gamma"), gamma_, false});
}

// ---------------------------------------------------------------------------

TransposedAttention::TransposedAttention(std::size_t dim, std::size_t heads, std::optional<double> qkv_gamma,
                                         std::optional<double> proj_gamma)
    : dim_(dim),
      heads_(heads),
      qkv_(dim, 3 * dim, qkv_gamma),
      temperature_(Tensor::full({heads}, 1.0)),
      proj_(dim, dim, proj_gamma) {
  if (heads == 0 || dim % heads != 0) throw ConfigError("attention: heads must divide the channel count");
  temperature_.set_requires_grad(true);
}

Tensor TransposedAttention::attention_map(const Tensor& q, const Tensor& k) const {
  const Tensor qn = l2_normalize(q, 3);
  const Tensor kn = l2_normalize(k, 3);
  return softmax(axis_mul(bmm(qn, transpose_last(kn)), temperature_, 1), 3);
}

Tensor TransposedAttention::forward_with_attention(const Tensor& x, Tensor& attention) const {
  if (x.rank() != 3 || x.size(1) != dim_) {
    throw DimensionError("attention expects [B x " + std::to_string(dim_) + " x S], got " + shape_str(x.shape()));
  }
  const std::size_t b = x.size(0);
  const std::size_t s = x.size(2);
  const std::size_t hd = dim_ / heads_;
  const Tensor qkv = qkv_.forward(x);
  auto head_view = [&](std::size_t part) { return reshape(slice(qkv, 1, part * dim_, dim_), {b, heads_, hd, s}); };
  attention = attention_map(head_view(0), head_view(1));
  const Tensor mixed = reshape(bmm(attention, head_view(2)), {b, dim_, s});
  return proj_.forward(mixed);
}

Tensor TransposedAttention::forward(const Tensor& x) const {
  Tensor attention;
  return forward_with_attention(x, attention);
}

void TransposedAttention::init(InitSeeds& seeds) {
  qkv_.xavier_init(seeds.next());
  proj_.xavier_init(seeds.next());
}

void TransposedAttention::collect_parameters(const std::string& prefix, ParameterList& out) const {
  qkv_.collect_parameters(join_name(prefix, "qkv"), out);
  out.push_back({join_name(prefix, "temperature"), temperature_, false});
  proj_.collect_parameters(join_name(prefix, "proj"), out);
}

// ---------------------------------------------------------------------------

SDTAEncoder::SDTAEncoder(std::size_t dim, std::size_t heads, std::size_t splits, const Gammas& gammas,
                         double layer_scale_init)
    : dim_(dim),
      width_(ceil_div(dim, splits)),
      norm_xca_(dim),
      gamma_xca_(Tensor::full({dim}, layer_scale_init)),
      attn_(dim, heads, gammas.qkv, gammas.proj),
      norm_(dim),
      expand_(dim, 4 * dim, gammas.expand),
      contract_(4 * dim, dim, gammas.contract),
      gamma_(Tensor::full({dim}, layer_scale_init)) {
  if (splits < 2 || ceil_div(dim, width_) != splits) throw ConfigError("sdta: cannot split the channels evenly");
  for (std::size_t i = 0; i + 1 < splits; ++i) convs_.emplace_back(width_, width_, 3, 1, 1, width_);
  gamma_xca_.set_requires_grad(true);
  gamma_.set_requires_grad(true);
}

Tensor SDTAEncoder::forward(const Tensor& x) const {
  const std::size_t h = x.size(2);
  const std::size_t w = x.size(3);
  std::vector<Tensor> parts;
  Tensor carry;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const Tensor chunk = slice(x, 1, i * width_, width_);
    carry = convs_[i].forward(i == 0 ? chunk : add(carry, chunk));
    parts.push_back(carry);
  }
  const std::size_t used = convs_.size() * width_;
  parts.push_back(slice(x, 1, used, dim_ - used));
  Tensor y = flatten_spatial(concat(parts, 1));

  y = add(y, axis_mul(attn_.forward(norm_xca_.forward(y)), gamma_xca_, 1));
  y = contract_.forward(gelu(expand_.forward(norm_.forward(y))));
  return add(x, unflatten_spatial(axis_mul(y, gamma_, 1), h, w));
}

void SDTAEncoder::init(InitSeeds& seeds) {
  for (auto& c : convs_) c.xavier_init(seeds.next());
  attn_.init(seeds);
  expand_.xavier_init(seeds.next());
  contract_.xavier_init(seeds.next());
}

void SDTAEncoder::collect_parameters(const std::string& prefix, ParameterList& out) const {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].collect_parameters(join_name(prefix, "convs." + std::to_string(i)), out);
  }
  norm_xca_.collect_parameters(join_name(prefix, "norm_xca"), out);
  out.push_back({join_name(prefix, "gamma_xca"), gamma_xca_, false});
  attn_.collect_parameters(join_name(prefix, "xca"), out);
  norm_.collect_parameters(join_name(prefix, "norm"), out);
  expand_.collect_parameters(join_name(prefix, "pwconv1"), out);
  contract_.collect_parameters(join_name(prefix, "pwconv2"), out);
  out.push_back({join_name(prefix, "gamma"), gamma_, false});
}

// ---------------------------------------------------------------------------

namespace {

ModelConfig validated(const ModelConfig& c) {
  c.validate();
  return c;
}

bool is_sdta(const ModelConfig& c, std::size_t stage, std::size_t block) {
  return c.sdta_stages.contains(stage) && block + 1 == c.stage_depths[stage - 1];
}

}  // namespace

EdgeEarModel::EdgeEarModel(const ModelConfig& config, std::uint64_t seed)
    : config_(validated(config)),
      stem_(config.in_channels, config.stage_dims[0], 4, 4, 0, 1),
      stem_norm_(config.stage_dims[0]),
      head_norm_(config.stage_dims[3]),
      head_(config.stage_dims[3], config.embedding_dim) {
  using Slot = ModelConfig::Slot;
  for (std::size_t stage = 1; stage <= 4; ++stage) {
    const std::size_t d = config_.stage_dims[stage - 1];
    if (stage > 1) {
      const std::size_t prev = config_.stage_dims[stage - 2];
      down_norms_.emplace_back(prev);
      down_convs_.emplace_back(prev, d, 2, 2, 0, 1);
    }
    std::vector<Block> blocks;
    for (std::size_t b = 0; b < config_.stage_depths[stage - 1]; ++b) {
      if (is_sdta(config_, stage, b)) {
        SDTAEncoder::Gammas g{config_.gamma_for(stage, Slot::AttentionQkv), config_.gamma_for(stage, Slot::AttentionProj),
                              config_.gamma_for(stage, Slot::MlpExpand), config_.gamma_for(stage, Slot::MlpContract)};
        blocks.emplace_back(std::in_place_type<SDTAEncoder>, d, config_.num_heads[stage - 1], config_.splits[stage - 1],
                            g, config_.layer_scale_init);
      } else {
        blocks.emplace_back(std::in_place_type<ConvEncoder>, d, config_.kernel_sizes[stage - 1],
                            config_.gamma_for(stage, Slot::ConvExpand), config_.gamma_for(stage, Slot::ConvContract),
                            config_.layer_scale_init);
      }
    }
    stages_.push_back(std::move(blocks));
  }

  InitSeeds seeds(seed);
  stem_.xavier_init(seeds.next());
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0) down_convs_[s - 1].xavier_init(seeds.next());
    for (auto& block : stages_[s]) std::visit([&](auto& b) { b.init(seeds); }, block);
  }
  head_.xavier_init(seeds.next());
}

Tensor EdgeEarModel::forward_embed(const Tensor& images) const {
  const std::size_t n = config_.input_size;
  if (images.rank() != 4 || images.size(1) != config_.in_channels || images.size(2) != n || images.size(3) != n ||
      images.size(0) == 0) {
    throw DimensionError("forward_embed expects [B x " + std::to_string(config_.in_channels) + " x " +
                         std::to_string(n) + " x " + std::to_string(n) + "], got " + shape_str(images.shape()));
  }
  Tensor x = stem_norm_.forward(stem_.forward(images));
  check_finite(x, "stem");
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0) x = down_convs_[s - 1].forward(down_norms_[s - 1].forward(x));
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      x = std::visit([&](const auto& block) { return block.forward(x); }, stages_[s][b]);
      check_finite(x, stage_name(s + 1) + ".blocks." + std::to_string(b));
    }
  }
  // Global average pool over H and W.
  const Tensor pooled = mean(flatten_spatial(x), 2);
  const Tensor normed = reshape(head_norm_.forward(pooled), {pooled.size(0), pooled.size(1), 1});
  const Tensor emb = head_.forward(normed);
  check_finite(emb, "head");
  return reshape(emb, {emb.size(0), emb.size(1)});
}

ParameterList EdgeEarModel::parameters() const {
  ParameterList out;
  stem_.collect_parameters("stem.conv", out);
  stem_norm_.collect_parameters("stem.norm", out);
  for (std::size_t s = 0; s < 4; ++s) {
    const std::string prefix = stage_name(s + 1);
    if (s > 0) {
      down_norms_[s - 1].collect_parameters(prefix + ".downsample.norm", out);
      down_convs_[s - 1].collect_parameters(prefix + ".downsample.conv", out);
    }
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      const std::string name = prefix + ".blocks." + std::to_string(b);
      std::visit([&](const auto& block) { block.collect_parameters(name, out); }, stages_[s][b]);
    }
  }
  head_norm_.collect_parameters("head.norm", out);
  head_.collect_parameters("head.fc", out);
  return out;
}

std::size_t EdgeEarModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

std::vector<ProjectionInfo> EdgeEarModel::projections() const {
  std::vector<ProjectionInfo> out;
  auto record = [&](const std::string& name, std::size_t stage, const Projection& p) {
    out.push_back({name, stage, p.is_low_rank(), p.gamma(), p.rank(), p.in_features(), p.out_features()});
  };
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      const std::string name = stage_name(s + 1) + ".blocks." + std::to_string(b);
      if (const auto* conv = std::get_if<ConvEncoder>(&stages_[s][b])) {
        record(name + ".pwconv1", s + 1, conv->expand());
        record(name + ".pwconv2", s + 1, conv->contract());
      } else {
        const auto& sdta = std::get<SDTAEncoder>(stages_[s][b]);
        record(name + ".xca.qkv", s + 1, sdta.attention().qkv());
        record(name + ".xca.proj", s + 1, sdta.attention().proj());
        record(name + ".pwconv1", s + 1, sdta.expand());
        record(name + ".pwconv2", s + 1, sdta.contract());
      }
    }
  }
  record("head.fc", 0, Projection(head_));
  return out;
}

void EdgeEarModel::load_parameters(const Blob& blob) {
  std::unordered_map<std::string, const Tensor*> index;
  for (const auto& t : blob.tensors) index.emplace(t.name, &t.tensor);
  ParameterList params = parameters();
  if (index.size() != params.size()) {
    throw LoadError("checkpoint holds " + std::to_string(index.size()) + " tensors, model expects " +
                    std::to_string(params.size()));
  }
  for (auto& p : params) {
    auto it = index.find(p.name);
    if (it == index.end()) throw LoadError("checkpoint is missing tensor '" + p.name + "'");
    if (it->second->shape() != p.tensor.shape()) {
      throw LoadError("tensor '" + p.name + "' has shape " + shape_str(it->second->shape()) + ", model expects " +
                      shape_str(p.tensor.shape()));
    }
  }
  for (auto& p : params) {
    const auto src = index.at(p.name)->values();
    std::ranges::copy(src, p.tensor.mutable_values().begin());
  }
}

Blob EdgeEarModel::parameter_blob() const {
  Blob blob;
  for (const auto& p : parameters()) blob.tensors.push_back({p.name, p.tensor.detach()});
  blob.meta["model"] = config_.to_json();
  return blob;
}

// ---------------------------------------------------------------------------

LayerGraph describe_model(const ModelConfig& config) {
  config.validate();
  using Slot = ModelConfig::Slot;
  const std::size_t n = config.input_size;
  GraphBuilder g({config.in_channels, n, n});
  int x = g.conv2d("stem.conv", -1, config.stage_dims[0], 4, 4, 0, 1);
  x = g.layer_norm("stem.norm", x);
  for (std::size_t stage = 1; stage <= 4; ++stage) {
    const std::string sp = stage_name(stage);
    const std::size_t d = config.stage_dims[stage - 1];
    if (stage > 1) {
      x = g.layer_norm(sp + ".downsample.norm", x);
      x = g.conv2d(sp + ".downsample.conv", x, d, 2, 2, 0, 1);
    }
    for (std::size_t b = 0; b < config.stage_depths[stage - 1]; ++b) {
      const std::string bp = sp + ".blocks." + std::to_string(b);
      const int input = x;
      if (!is_sdta(config, stage, b)) {
        const std::size_t k = config.kernel_sizes[stage - 1];
        int y = g.conv2d(bp + ".dwconv", input, d, k, 1, k / 2, d);
        y = g.layer_norm(bp + ".norm", y);
        y = g.projection(bp + ".pwconv1", y, 4 * d, config.gamma_for(stage, Slot::ConvExpand));
        y = g.gelu(bp + ".act", y);
        y = g.projection(bp + ".pwconv2", y, d, config.gamma_for(stage, Slot::ConvContract));
        y = g.layer_scale(bp + ".gamma", y);
        x = g.add(bp + ".residual", input, y);
        continue;
      }
      const std::size_t splits = config.splits[stage - 1];
      const std::size_t width = ceil_div(d, splits);
      std::vector<int> parts;
      int carry = -1;
      for (std::size_t i = 0; i + 1 < splits; ++i) {
        const std::string cp = bp + ".convs." + std::to_string(i);
        int chunk = g.slice(cp + ".split", input, i * width, width);
        if (i > 0) chunk = g.add(cp + ".carry", carry, chunk);
        carry = g.conv2d(cp, chunk, width, 3, 1, 1, width);
        parts.push_back(carry);
      }
      const std::size_t used = (splits - 1) * width;
      parts.push_back(g.slice(bp + ".convs.rest", input, used, d - used));
      int y = g.concat(bp + ".concat", parts);
      int a = g.layer_norm(bp + ".norm_xca", y);
      a = g.projection(bp + ".xca.qkv", a, 3 * d, config.gamma_for(stage, Slot::AttentionQkv));
      a = g.channel_attention(bp + ".xca.attention", a, config.num_heads[stage - 1]);
      a = g.projection(bp + ".xca.proj", a, d, config.gamma_for(stage, Slot::AttentionProj));
      a = g.layer_scale(bp + ".gamma_xca", a);
      y = g.add(bp + ".xca.residual", y, a);
      y = g.layer_norm(bp + ".norm", y);
      y = g.projection(bp + ".pwconv1", y, 4 * d, config.gamma_for(stage, Slot::MlpExpand));
      y = g.gelu(bp + ".act", y);
      y = g.projection(bp + ".pwconv2", y, d, config.gamma_for(stage, Slot::MlpContract));
      y = g.layer_scale(bp + ".gamma", y);
      x = g.add(bp + ".residual", input, y);
    }
  }
  x = g.global_pool("head.pool", x);
  x = g.layer_norm("head.norm", x);
  g.projection("head.fc", x, config.embedding_dim, std::nullopt);
  LayerGraph graph = std::move(g).build();
  graph.validate();
  return graph;
}

}  // namespace edgeear
