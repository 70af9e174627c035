// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "edgeear/error.hpp"
#include "edgeear/parallel.hpp"
#include "edgeear/tape.hpp"

namespace edgeear {

namespace {

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void record(GradTape::Rule rule) { active_tape()->record(std::move(rule)); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

std::size_t normalize_axis(const Tensor& x, int axis, const char* op) {
  const int r = static_cast<int>(x.rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for " +
                         shape_str(x.shape()));
  }
  return static_cast<std::size_t>(a);
}

// outer x n x inner decomposition of a shape around one axis.
struct AxisView {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

// C[M x N] += A[M x K] * B[K x N]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[M x K] += D[M x N] * B[K x N]^T
void gemm_nt(const double* d, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* di = d + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += di[j] * bp[j];
      c[i * k + p] += s;
    }
  }
}

// C[K x N] += A[M x K]^T * D[M x N]
void gemm_tn(const double* a, const double* d, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* di = d + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * di[j];
    }
  }
}

template <typename Fwd, typename Bwd>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Bwd dfdx) {
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    record([x, out, dfdx]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto xv = x.values();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto av = a.values(), bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (wants_grad({&a, &b})) {
    out.set_requires_grad(true);
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto av = a.values(), bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (wants_grad({&a, &b})) {
    out.set_requires_grad(true);
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto av = a.values(), bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (wants_grad({&a, &b})) {
    out.set_requires_grad(true);
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto av = a.values(), bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  return unary_elementwise(
      a, [factor](double x) { return factor * x; }, [factor](double) { return factor; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary_elementwise(
      x, [=](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [=](double v) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.size(1) != b.size(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
  Tensor out({m, n});
  gemm_nn(a.values().data(), b.values().data(), out.mutable_values().data(), m, k, n);
  if (wants_grad({&a, &b})) {
    out.set_requires_grad(true);
    record([a, b, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad().data();
      if (a.requires_grad()) gemm_nt(g, b.values().data(), a.mutable_grad().data(), m, k, n);
      if (b.requires_grad()) gemm_tn(a.values().data(), g, b.mutable_grad().data(), m, k, n);
    });
  }
  return out;
}

Tensor transpose_last(const Tensor& a) {
  if (a.rank() < 2) throw DimensionError("transpose_last: rank < 2 for " + shape_str(a.shape()));
  Shape s = a.shape();
  const std::size_t r = s[s.size() - 2], c = s[s.size() - 1];
  const std::size_t batch = a.numel() / (r * c);
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  Tensor out(s);
  auto av = a.values();
  auto ov = out.mutable_values();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ov[b * r * c + j * r + i] = av[b * r * c + i * c + j];
  if (wants_grad({&a})) {
    out.set_requires_grad(true);
    record([a, out, batch, r, c]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[b * r * c + i * c + j] += g[b * r * c + j * r + i];
    });
  }
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() != b.rank()) {
    throw DimensionError("bmm: incompatible ranks " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t r = a.rank();
  for (std::size_t i = 0; i + 2 < r; ++i) {
    if (a.shape()[i] != b.shape()[i]) {
      throw DimensionError("bmm: leading extents differ " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
    }
  }
  const std::size_t m = a.shape()[r - 2], k = a.shape()[r - 1], n = b.shape()[r - 1];
  if (b.shape()[r - 2] != k) {
    throw DimensionError("bmm: inner extents differ " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Shape os = a.shape();
  os[r - 1] = n;
  Tensor out(os);
  const std::size_t batch = a.numel() / (m * k);
  {
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.mutable_values().data();
    parallel_for(batch, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) gemm_nn(av + i * m * k, bv + i * k * n, ov + i * m * n, m, k, n);
    });
  }
  if (wants_grad({&a, &b})) {
    out.set_requires_grad(true);
    record([a, b, out, batch, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad().data();
      const double* av = a.values().data();
      const double* bv = b.values().data();
      if (a.requires_grad()) {
        double* ga = a.mutable_grad().data();
        for (std::size_t i = 0; i < batch; ++i) gemm_nt(g + i * m * n, bv + i * k * n, ga + i * m * k, m, k, n);
      }
      if (b.requires_grad()) {
        double* gb = b.mutable_grad().data();
        for (std::size_t i = 0; i < batch; ++i) gemm_tn(av + i * m * k, g + i * m * n, gb + i * k * n, m, k, n);
      }
    });
  }
  return out;
}

Tensor channel_matmul(const Tensor& w, const Tensor& x) {
  if (w.rank() != 2 || x.rank() != 3 || w.size(1) != x.size(1)) {
    throw DimensionError("channel_matmul: weight " + shape_str(w.shape()) + " does not apply to input " +
                         shape_str(x.shape()));
  }
  const std::size_t m = w.size(0), k = w.size(1), batch = x.size(0), s = x.size(2);
  Tensor out({batch, m, s});
  {
    const double* wv = w.values().data();
    const double* xv = x.values().data();
    double* ov = out.mutable_values().data();
    parallel_for(batch, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t b = lo; b < hi; ++b) gemm_nn(wv, xv + b * k * s, ov + b * m * s, m, k, s);
    });
  }
  if (wants_grad({&w, &x})) {
    out.set_requires_grad(true);
    record([w, x, out, m, k, batch, s]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad().data();
      const double* wv = w.values().data();
      const double* xv = x.values().data();
      if (w.requires_grad()) {
        double* gw = w.mutable_grad().data();
        for (std::size_t b = 0; b < batch; ++b) gemm_nt(g + b * m * s, xv + b * k * s, gw, m, k, s);
      }
      if (x.requires_grad()) {
        double* gx = x.mutable_grad().data();
        parallel_for(batch, [&](std::size_t lo, std::size_t hi) {
          for (std::size_t b = lo; b < hi; ++b) gemm_tn(wv, g + b * m * s, gx + b * k * s, m, k, s);
        });
      }
    });
  }
  return out;
}

Tensor axis_mul(const Tensor& x, const Tensor& v, int axis) {
  const std::size_t ax = normalize_axis(x, axis, "axis_mul");
  const AxisView av = axis_view(x.shape(), ax);
  if (v.numel() != av.n) {
    throw DimensionError("axis_mul: vector of " + std::to_string(v.numel()) + " values for axis extent " +
                         std::to_string(av.n));
  }
  Tensor out(x.shape());
  auto xv = x.values(), vv = v.values();
  auto ov = out.mutable_values();
  for (std::size_t o = 0; o < av.outer; ++o)
    for (std::size_t c = 0; c < av.n; ++c) {
      const std::size_t base = (o * av.n + c) * av.inner;
      for (std::size_t i = 0; i < av.inner; ++i) ov[base + i] = xv[base + i] * vv[c];
    }
  if (wants_grad({&x, &v})) {
    out.set_requires_grad(true);
    record([x, v, out, av]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto xv = x.values(), vv = v.values();
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        for (std::size_t o = 0; o < av.outer; ++o)
          for (std::size_t c = 0; c < av.n; ++c) {
            const std::size_t base = (o * av.n + c) * av.inner;
            for (std::size_t i = 0; i < av.inner; ++i) gx[base + i] += g[base + i] * vv[c];
          }
      }
      if (v.requires_grad()) {
        auto gv = v.mutable_grad();
        for (std::size_t o = 0; o < av.outer; ++o)
          for (std::size_t c = 0; c < av.n; ++c) {
            const std::size_t base = (o * av.n + c) * av.inner;
            double s = 0.0;
            for (std::size_t i = 0; i < av.inner; ++i) s += g[base + i] * xv[base + i];
            gv[c] += s;
          }
      }
    });
  }
  return out;
}

Tensor axis_add(const Tensor& x, const Tensor& v, int axis) {
  const std::size_t ax = normalize_axis(x, axis, "axis_add");
  const AxisView av = axis_view(x.shape(), ax);
  if (v.numel() != av.n) {
    throw DimensionError("axis_add: vector of " + std::to_string(v.numel()) + " values for axis extent " +
                         std::to_string(av.n));
  }
  Tensor out(x.shape());
  auto xv = x.values(), vv = v.values();
  auto ov = out.mutable_values();
  for (std::size_t o = 0; o < av.outer; ++o)
    for (std::size_t c = 0; c < av.n; ++c) {
      const std::size_t base = (o * av.n + c) * av.inner;
      for (std::size_t i = 0; i < av.inner; ++i) ov[base + i] = xv[base + i] + vv[c];
    }
  if (wants_grad({&x, &v})) {
    out.set_requires_grad(true);
    record([x, v, out, av]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (v.requires_grad()) {
        auto gv = v.mutable_grad();
        for (std::size_t o = 0; o < av.outer; ++o)
          for (std::size_t c = 0; c < av.n; ++c) {
            const std::size_t base = (o * av.n + c) * av.inner;
            double s = 0.0;
            for (std::size_t i = 0; i < av.inner; ++i) s += g[base + i];
            gv[c] += s;
          }
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Conv2dParams& p) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw DimensionError("conv2d: expected 4-D input and weight, got " + shape_str(x.shape()) + " and " +
                         shape_str(w.shape()));
  }
  const std::size_t batch = x.size(0), channels = x.size(1), height = x.size(2), width = x.size(3);
  const std::size_t out_ch = w.size(0), group_in = w.size(1), kh = w.size(2), kw = w.size(3);
  const std::size_t groups = p.groups;
  if (groups == 0 || channels % groups != 0 || out_ch % groups != 0) {
    throw DimensionError("conv2d: channels " + std::to_string(channels) + "->" + std::to_string(out_ch) +
                         " not divisible by groups " + std::to_string(groups));
  }
  if (group_in != channels / groups) {
    throw DimensionError("conv2d: weight " + shape_str(w.shape()) + " expects " + std::to_string(group_in) +
                         " channels per group, input has " + std::to_string(channels / groups));
  }
  if (p.stride == 0 || height + 2 * p.padding < kh || width + 2 * p.padding < kw) {
    throw DimensionError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " does not fit padded input " + shape_str(x.shape()));
  }
  const std::size_t oh = (height + 2 * p.padding - kh) / p.stride + 1;
  const std::size_t ow = (width + 2 * p.padding - kw) / p.stride + 1;
  const std::size_t out_per_group = out_ch / groups;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(p.padding);
  const std::ptrdiff_t stride = static_cast<std::ptrdiff_t>(p.stride);
  const auto H = static_cast<std::ptrdiff_t>(height), W = static_cast<std::ptrdiff_t>(width);

  // Visits every (output pixel, input pixel, weight) triple of one output
  // channel plane; f(out_index, in_index, weight_index).
  auto for_each_tap = [=](std::size_t b, std::size_t o, auto&& f) {
    const std::size_t g = o / out_per_group;
    for (std::size_t c = 0; c < group_in; ++c) {
      const std::size_t ic = g * group_in + c;
      const std::size_t in_base = (b * channels + ic) * height * width;
      const std::size_t out_base = (b * out_ch + o) * oh * ow;
      for (std::size_t u = 0; u < kh; ++u) {
        for (std::size_t v = 0; v < kw; ++v) {
          const std::size_t widx = ((o * group_in + c) * kh + u) * kw + v;
          for (std::size_t y = 0; y < oh; ++y) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y) * stride - pad + static_cast<std::ptrdiff_t>(u);
            if (iy < 0 || iy >= H) continue;
            const std::size_t in_row = in_base + static_cast<std::size_t>(iy) * width;
            const std::size_t out_row = out_base + y * ow;
            for (std::size_t xo = 0; xo < ow; ++xo) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xo) * stride - pad + static_cast<std::ptrdiff_t>(v);
              if (ix < 0 || ix >= W) continue;
              f(out_row + xo, in_row + static_cast<std::size_t>(ix), widx);
            }
          }
        }
      }
    }
  };

  Tensor out({batch, out_ch, oh, ow});
  {
    const double* xv = x.values().data();
    const double* wv = w.values().data();
    double* ov = out.mutable_values().data();
    parallel_for(batch * out_ch, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t job = lo; job < hi; ++job) {
        for_each_tap(job / out_ch, job % out_ch,
                     [&](std::size_t oi, std::size_t ii, std::size_t wi) { ov[oi] += wv[wi] * xv[ii]; });
      }
    });
  }
  if (wants_grad({&x, &w})) {
    out.set_requires_grad(true);
    record([x, w, out, batch, out_ch, for_each_tap]() mutable {
      if (!out.has_grad()) return;
      const double* g = out.grad().data();
      const double* xv = x.values().data();
      const double* wv = w.values().data();
      if (w.requires_grad()) {
        double* gw = w.mutable_grad().data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t o = 0; o < out_ch; ++o)
            for_each_tap(b, o, [&](std::size_t oi, std::size_t ii, std::size_t wi) { gw[wi] += g[oi] * xv[ii]; });
      }
      if (x.requires_grad()) {
        double* gx = x.mutable_grad().data();
        parallel_for(batch, [&](std::size_t lo, std::size_t hi) {
          for (std::size_t b = lo; b < hi; ++b)
            for (std::size_t o = 0; o < out_ch; ++o)
              for_each_tap(b, o, [&](std::size_t oi, std::size_t ii, std::size_t wi) { gx[ii] += g[oi] * wv[wi]; });
        });
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, int axis, double eps) {
  const std::size_t ax = normalize_axis(x, axis, "layer_norm");
  const AxisView av = axis_view(x.shape(), ax);
  Tensor out(x.shape());
  std::vector<double> inv_std(av.outer * av.inner);
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t o = 0; o < av.outer; ++o) {
    for (std::size_t i = 0; i < av.inner; ++i) {
      const std::size_t base = o * av.n * av.inner + i;
      double mu = 0.0;
      for (std::size_t c = 0; c < av.n; ++c) mu += xv[base + c * av.inner];
      mu /= static_cast<double>(av.n);
      double var = 0.0;
      for (std::size_t c = 0; c < av.n; ++c) {
        const double d = xv[base + c * av.inner] - mu;
        var += d * d;
      }
      var /= static_cast<double>(av.n);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[o * av.inner + i] = is;
      for (std::size_t c = 0; c < av.n; ++c) ov[base + c * av.inner] = (xv[base + c * av.inner] - mu) * is;
    }
  }
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    record([x, out, av, inv_std = std::move(inv_std)]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto y = out.values();
      auto gx = x.mutable_grad();
      const double inv_n = 1.0 / static_cast<double>(av.n);
      for (std::size_t o = 0; o < av.outer; ++o) {
        for (std::size_t i = 0; i < av.inner; ++i) {
          const std::size_t base = o * av.n * av.inner + i;
          double mg = 0.0, mgy = 0.0;
          for (std::size_t c = 0; c < av.n; ++c) {
            const std::size_t idx = base + c * av.inner;
            mg += g[idx];
            mgy += g[idx] * y[idx];
          }
          mg *= inv_n;
          mgy *= inv_n;
          const double is = inv_std[o * av.inner + i];
          for (std::size_t c = 0; c < av.n; ++c) {
            const std::size_t idx = base + c * av.inner;
            gx[idx] += is * (g[idx] - mg - y[idx] * mgy);
          }
        }
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(x, axis, "softmax");
  const AxisView av = axis_view(x.shape(), ax);
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t o = 0; o < av.outer; ++o) {
    for (std::size_t i = 0; i < av.inner; ++i) {
      const std::size_t base = o * av.n * av.inner + i;
      double mx = xv[base];
      for (std::size_t c = 1; c < av.n; ++c) mx = std::max(mx, xv[base + c * av.inner]);
      double z = 0.0;
      for (std::size_t c = 0; c < av.n; ++c) {
        const double e = std::exp(xv[base + c * av.inner] - mx);
        ov[base + c * av.inner] = e;
        z += e;
      }
      for (std::size_t c = 0; c < av.n; ++c) ov[base + c * av.inner] /= z;
    }
  }
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    record([x, out, av]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto y = out.values();
      auto gx = x.mutable_grad();
      for (std::size_t o = 0; o < av.outer; ++o) {
        for (std::size_t i = 0; i < av.inner; ++i) {
          const std::size_t base = o * av.n * av.inner + i;
          double dot = 0.0;
          for (std::size_t c = 0; c < av.n; ++c) dot += g[base + c * av.inner] * y[base + c * av.inner];
          for (std::size_t c = 0; c < av.n; ++c) {
            const std::size_t idx = base + c * av.inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor log_softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(x, axis, "log_softmax");
  const AxisView av = axis_view(x.shape(), ax);
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t o = 0; o < av.outer; ++o) {
    for (std::size_t i = 0; i < av.inner; ++i) {
      const std::size_t base = o * av.n * av.inner + i;
      double mx = xv[base];
      for (std::size_t c = 1; c < av.n; ++c) mx = std::max(mx, xv[base + c * av.inner]);
      double z = 0.0;
      for (std::size_t c = 0; c < av.n; ++c) z += std::exp(xv[base + c * av.inner] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t c = 0; c < av.n; ++c) ov[base + c * av.inner] = xv[base + c * av.inner] - lse;
    }
  }
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    record([x, out, av]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto y = out.values();
      auto gx = x.mutable_grad();
      for (std::size_t o = 0; o < av.outer; ++o) {
        for (std::size_t i = 0; i < av.inner; ++i) {
          const std::size_t base = o * av.n * av.inner + i;
          double gs = 0.0;
          for (std::size_t c = 0; c < av.n; ++c) gs += g[base + c * av.inner];
          for (std::size_t c = 0; c < av.n; ++c) {
            const std::size_t idx = base + c * av.inner;
            gx[idx] += g[idx] - std::exp(y[idx]) * gs;
          }
        }
      }
    });
  }
  return out;
}

Tensor l2_normalize(const Tensor& x, int axis, double eps) {
  const std::size_t ax = normalize_axis(x, axis, "l2_normalize");
  const AxisView av = axis_view(x.shape(), ax);
  Tensor out(x.shape());
  std::vector<double> norms(av.outer * av.inner);
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t o = 0; o < av.outer; ++o) {
    for (std::size_t i = 0; i < av.inner; ++i) {
      const std::size_t base = o * av.n * av.inner + i;
      double ss = 0.0;
      for (std::size_t c = 0; c < av.n; ++c) ss += xv[base + c * av.inner] * xv[base + c * av.inner];
      const double nrm = std::max(std::sqrt(ss), eps);
      norms[o * av.inner + i] = std::sqrt(ss);
      for (std::size_t c = 0; c < av.n; ++c) ov[base + c * av.inner] = xv[base + c * av.inner] / nrm;
    }
  }
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    record([x, out, av, eps, norms = std::move(norms)]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto y = out.values();
      auto gx = x.mutable_grad();
      for (std::size_t o = 0; o < av.outer; ++o) {
        for (std::size_t i = 0; i < av.inner; ++i) {
          const std::size_t base = o * av.n * av.inner + i;
          const double nrm = norms[o * av.inner + i];
          if (nrm <= eps) {
            for (std::size_t c = 0; c < av.n; ++c) gx[base + c * av.inner] += g[base + c * av.inner] / eps;
            continue;
          }
          double dot = 0.0;
          for (std::size_t c = 0; c < av.n; ++c) dot += g[base + c * av.inner] * y[base + c * av.inner];
          for (std::size_t c = 0; c < av.n; ++c) {
            const std::size_t idx = base + c * av.inner;
            gx[idx] += (g[idx] - y[idx] * dot) / nrm;
          }
        }
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto xv = x.values();
  Tensor out(std::move(shape), std::vector<double>(xv.begin(), xv.end()));
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(x, axis, "slice");
  const AxisView av = axis_view(x.shape(), ax);
  if (start + length > av.n || length == 0) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") invalid for extent " + std::to_string(av.n));
  }
  Shape s = x.shape();
  s[ax] = length;
  Tensor out(s);
  auto xv = x.values();
  auto ov = out.mutable_values();
  const std::size_t run = length * av.inner;
  for (std::size_t o = 0; o < av.outer; ++o) {
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * av.n + start) * av.inner), run,
                ov.begin() + static_cast<std::ptrdiff_t>(o * run));
  }
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    record([x, out, av, start, run]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t o = 0; o < av.outer; ++o)
        for (std::size_t i = 0; i < run; ++i) gx[(o * av.n + start) * av.inner + i] += g[o * run + i];
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t ax = normalize_axis(parts[0], axis, "concat");
  Shape s = parts[0].shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape ps = p.shape();
    if (ps.size() != s.size()) throw DimensionError("concat: rank mismatch");
    ps[ax] = s[ax];
    if (ps != s) {
      throw DimensionError("concat: " + shape_str(p.shape()) + " incompatible with " + shape_str(parts[0].shape()));
    }
    total += p.shape()[ax];
  }
  s[ax] = total;
  Tensor out(s);
  const AxisView ov_view = axis_view(s, ax);
  auto ov = out.mutable_values();
  bool any_grad = false;
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const std::size_t run = p.shape()[ax] * ov_view.inner;
    auto pv = p.values();
    for (std::size_t o = 0; o < ov_view.outer; ++o) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * run), run,
                  ov.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * ov_view.inner));
    }
    offsets.push_back(offset);
    offset += p.shape()[ax];
    any_grad = any_grad || p.requires_grad();
  }
  if (any_grad && active_tape() != nullptr) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    record([inputs, offsets, out, ov_view, total, ax]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor& p = inputs[k];
        if (!p.requires_grad()) continue;
        const std::size_t run = p.shape()[ax] * ov_view.inner;
        auto gp = p.mutable_grad();
        for (std::size_t o = 0; o < ov_view.outer; ++o)
          for (std::size_t i = 0; i < run; ++i) gp[o * run + i] += g[(o * total + offsets[k]) * ov_view.inner + i];
      }
    });
  }
  return out;
}

Tensor mean(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(x, axis, "mean");
  const AxisView av = axis_view(x.shape(), ax);
  Shape s = x.shape();
  s.erase(s.begin() + static_cast<std::ptrdiff_t>(ax));
  if (s.empty()) s.push_back(1);
  Tensor out(s);
  auto xv = x.values();
  auto ov = out.mutable_values();
  const double inv = 1.0 / static_cast<double>(av.n);
  for (std::size_t o = 0; o < av.outer; ++o)
    for (std::size_t i = 0; i < av.inner; ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < av.n; ++c) acc += xv[(o * av.n + c) * av.inner + i];
      ov[o * av.inner + i] = acc * inv;
    }
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    record([x, out, av, inv]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t o = 0; o < av.outer; ++o)
        for (std::size_t c = 0; c < av.n; ++c)
          for (std::size_t i = 0; i < av.inner; ++i) gx[(o * av.n + c) * av.inner + i] += g[o * av.inner + i] * inv;
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    record([x, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      for (double& gx : x.mutable_grad()) gx += g;
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean_all: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor arc_margin(const Tensor& cosines, std::span<const std::size_t> targets, double margin, double clamp_eps) {
  if (cosines.rank() != 2 || targets.size() != cosines.size(0)) {
    throw DimensionError("arc_margin: " + std::to_string(targets.size()) + " targets for cosine matrix " +
                         shape_str(cosines.shape()));
  }
  const std::size_t rows = cosines.size(0), classes = cosines.size(1);
  for (std::size_t t : targets) {
    if (t >= classes) throw ContractError("arc_margin: target " + std::to_string(t) + " out of range");
  }
  auto cv = cosines.values();
  Tensor out(cosines.shape(), std::vector<double>(cv.begin(), cv.end()));
  auto ov = out.mutable_values();
  std::vector<double> slope(rows, 0.0);
  const double lo = -1.0 + clamp_eps, hi = 1.0 - clamp_eps;
  for (std::size_t b = 0; b < rows; ++b) {
    const std::size_t idx = b * classes + targets[b];
    const double c = cv[idx];
    const double theta = std::acos(std::clamp(c, -1.0, 1.0));
    ov[idx] = std::cos(theta + margin);
    // d cos(acos(c) + m) / dc = sin(acos(c) + m) / sin(acos(c)); zero outside
    // the guard band, where the quotient is unbounded.
    slope[b] = (c > lo && c < hi) ? std::sin(theta + margin) / std::sin(theta) : 0.0;
  }
  if (wants_grad({&cosines})) {
    out.set_requires_grad(true);
    std::vector<std::size_t> tgt(targets.begin(), targets.end());
    record([cosines, out, tgt = std::move(tgt), slope = std::move(slope), classes]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gc = cosines.mutable_grad();
      for (std::size_t b = 0; b < tgt.size(); ++b) {
        for (std::size_t k = 0; k < classes; ++k) {
          const std::size_t idx = b * classes + k;
          gc[idx] += k == tgt[b] ? g[idx] * slope[b] : g[idx];
        }
      }
    });
  }
  return out;
}

}  // namespace edgeear
