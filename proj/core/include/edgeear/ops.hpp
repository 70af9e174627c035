// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "edgeear/tensor.hpp"

// Differentiable tensor operations. Every op validates extents (throwing
// DimensionError), computes a fresh output, and records a backward rule on the
// active GradTape when an input requires a gradient. There is no implicit
// broadcasting; per-axis vectors go through axis_mul/axis_add.
namespace edgeear {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// Gaussian error linear unit, x * Phi(x) with the exact erf form.
Tensor gelu(const Tensor& x);

// [M x K] * [K x N] -> [M x N].
Tensor matmul(const Tensor& a, const Tensor& b);
// Swaps the last two axes.
Tensor transpose_last(const Tensor& a);
// Batched matmul over identical leading extents: [..., M, K] * [..., K, N].
Tensor bmm(const Tensor& a, const Tensor& b);
// Applies w [M x K] to every position of x [B x K x S], giving [B x M x S].
Tensor channel_matmul(const Tensor& w, const Tensor& x);

// y = x * v (resp. x + v) with v indexed by the coordinate along `axis`.
Tensor axis_mul(const Tensor& x, const Tensor& v, int axis);
Tensor axis_add(const Tensor& x, const Tensor& v, int axis);

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

// Grouped 2-D cross-correlation. x: [B x C x H x W], w: [O x C/groups x k x k].
Tensor conv2d(const Tensor& x, const Tensor& w, const Conv2dParams& params);

inline constexpr double kLayerNormEps = 1e-6;

// Zero-mean, unit-variance normalization along `axis` (biased variance, no
// affine part).
Tensor layer_norm(const Tensor& x, int axis, double eps = kLayerNormEps);

Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

// x / max(||x||_2, eps) along `axis`.
Tensor l2_normalize(const Tensor& x, int axis, double eps = 1e-12);

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length);
Tensor concat(std::span<const Tensor> parts, int axis);

// Mean over one axis; the axis is removed from the shape.
Tensor mean(const Tensor& x, int axis);
Tensor sum(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Additive angular margin on a [B x K] cosine matrix: the entry of each row's
// target class c becomes cos(acos(c) + margin). Other entries pass through.
// The target gradient is zeroed for c outside [-1 + clamp_eps, 1 - clamp_eps].
Tensor arc_margin(const Tensor& cosines, std::span<const std::size_t> targets, double margin,
                  double clamp_eps = 1e-7);

}  // namespace edgeear
