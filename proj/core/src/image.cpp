// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <vector>

#include "edgeear/error.hpp"

namespace edgeear::image {

namespace {

void check_image(const Tensor& img) {
  if (img.rank() != 3 || img.numel() == 0) throw DimensionError("image must be [C x H x W], got " + shape_str(img.shape()));
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

Tensor warp(const Tensor& img, const Affine& a, std::size_t out_h, std::size_t out_w) {
  check_image(img);
  const std::size_t c = img.size(0), h = img.size(1), w = img.size(2);
  Tensor out({c, out_h, out_w});
  auto src = img.values();
  auto dst = out.mutable_values();
  const auto hi_x = static_cast<std::ptrdiff_t>(w) - 1;
  const auto hi_y = static_cast<std::ptrdiff_t>(h) - 1;
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = a[0] * static_cast<double>(x) + a[1] * static_cast<double>(y) + a[2];
      const double sy = a[3] * static_cast<double>(x) + a[4] * static_cast<double>(y) + a[5];
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const double fx = sx - fx0, fy = sy - fy0;
      const auto x0 = static_cast<std::ptrdiff_t>(fx0), y0 = static_cast<std::ptrdiff_t>(fy0);
      const std::size_t xa = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x0, 0, hi_x));
      const std::size_t xb = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x0 + 1, 0, hi_x));
      const std::size_t ya = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y0, 0, hi_y));
      const std::size_t yb = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y0 + 1, 0, hi_y));
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* p = src.data() + ch * h * w;
        const double top = p[ya * w + xa] * (1.0 - fx) + p[ya * w + xb] * fx;
        const double bottom = p[yb * w + xa] * (1.0 - fx) + p[yb * w + xb] * fx;
        dst[(ch * out_h + y) * out_w + x] = top * (1.0 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

Tensor resize_region(const Tensor& img, double x0, double y0, double w, double h, std::size_t out_h,
                     std::size_t out_w) {
  const double sx = w / static_cast<double>(out_w);
  const double sy = h / static_cast<double>(out_h);
  return warp(img, {sx, 0.0, x0 + 0.5 * sx - 0.5, 0.0, sy, y0 + 0.5 * sy - 0.5}, out_h, out_w);
}

Tensor resize(const Tensor& img, std::size_t out_h, std::size_t out_w) {
  check_image(img);
  if (img.size(1) == out_h && img.size(2) == out_w) return img.clone();
  return resize_region(img, 0.0, 0.0, static_cast<double>(img.size(2)), static_cast<double>(img.size(1)), out_h,
                       out_w);
}

Tensor affine(const Tensor& img, double degrees, double scale, double shear_degrees, double tx, double ty) {
  check_image(img);
  if (!(scale > 0.0)) throw ContractError("affine scale must be positive");
  const double cx = (static_cast<double>(img.size(2)) - 1.0) / 2.0;
  const double cy = (static_cast<double>(img.size(1)) - 1.0) / 2.0;
  // Forward map about the centre: M = scale * R(theta) * Shear. With y
  // pointing down, a positive angle turns the content counter-clockwise.
  const double t = deg2rad(degrees);
  const double sh = std::tan(deg2rad(shear_degrees));
  const double r00 = std::cos(t), r01 = std::sin(t), r10 = -std::sin(t), r11 = std::cos(t);
  const double m00 = scale * r00, m01 = scale * (r00 * sh + r01);
  const double m10 = scale * r10, m11 = scale * (r10 * sh + r11);
  const double det = m00 * m11 - m01 * m10;
  const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
  // src = c + M^-1 (dst - c - t)
  const double ox = cx + tx, oy = cy + ty;
  return warp(img, {i00, i01, cx - i00 * ox - i01 * oy, i10, i11, cy - i10 * ox - i11 * oy}, img.size(1),
              img.size(2));
}

Tensor flip_horizontal(const Tensor& img) {
  check_image(img);
  const std::size_t rows = img.size(0) * img.size(1), w = img.size(2);
  Tensor out(img.shape());
  auto s = img.values();
  auto d = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t x = 0; x < w; ++x) d[r * w + x] = s[r * w + (w - 1 - x)];
  return out;
}

Tensor flip_vertical(const Tensor& img) {
  check_image(img);
  const std::size_t c = img.size(0), h = img.size(1), w = img.size(2);
  Tensor out(img.shape());
  auto s = img.values();
  auto d = out.mutable_values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(s.begin() + static_cast<std::ptrdiff_t>((ch * h + (h - 1 - y)) * w), w,
                  d.begin() + static_cast<std::ptrdiff_t>((ch * h + y) * w));
  return out;
}

Tensor gaussian_blur(const Tensor& img, double sigma) {
  check_image(img);
  if (!(sigma > 0.0)) return img.clone();
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : kernel) v /= total;

  const std::size_t c = img.size(0), h = img.size(1), w = img.size(2);
  const auto iw = static_cast<std::ptrdiff_t>(w), ih = static_cast<std::ptrdiff_t>(h);
  Tensor tmp(img.shape()), out(img.shape());
  auto s = img.values();
  auto t = tmp.mutable_values();
  auto d = out.mutable_values();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const std::size_t base = ch * h * w;
    for (std::ptrdiff_t y = 0; y < ih; ++y)
      for (std::ptrdiff_t x = 0; x < iw; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          const std::ptrdiff_t xx = std::clamp<std::ptrdiff_t>(x + k, 0, iw - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * s[base + static_cast<std::size_t>(y * iw + xx)];
        }
        t[base + static_cast<std::size_t>(y * iw + x)] = acc;
      }
    for (std::ptrdiff_t y = 0; y < ih; ++y)
      for (std::ptrdiff_t x = 0; x < iw; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(y + k, 0, ih - 1);
          acc += kernel[static_cast<std::size_t>(k + radius)] * t[base + static_cast<std::size_t>(yy * iw + x)];
        }
        d[base + static_cast<std::size_t>(y * iw + x)] = acc;
      }
  }
  return out;
}

void clamp01(Tensor& img) {
  for (double& v : img.mutable_values()) v = std::clamp(v, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

namespace {

class PnmReader {
 public:
  PnmReader(std::vector<unsigned char> bytes, std::string name) : bytes_(std::move(bytes)), name_(std::move(name)) {}

  [[noreturn]] void fail(const std::string& why) const { throw LoadError(name_ + ": " + why); }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  unsigned long number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) fail("malformed header");
    unsigned long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > (1ul << 24)) fail("header value out of range");
    }
    return v;
  }

  Tensor read() {
    if (bytes_.size() < 2 || bytes_[0] != 'P') fail("not a PNM file");
    const char kind = static_cast<char>(bytes_[1]);
    if (kind != '2' && kind != '3' && kind != '5' && kind != '6') fail("unsupported PNM variant P" + std::string(1, kind));
    pos_ = 2;
    const bool color = kind == '3' || kind == '6';
    const bool binary = kind == '5' || kind == '6';
    const unsigned long w = number(), h = number(), maxval = number();
    if (w == 0 || h == 0) fail("empty image");
    if (maxval == 0 || maxval > 65535) fail("maxval out of range");
    const std::size_t channels = color ? 3 : 1;
    const std::size_t count = w * h * channels;
    std::vector<double> raw(count);
    if (binary) {
      ++pos_;  // single whitespace after maxval
      const std::size_t bps = maxval < 256 ? 1 : 2;
      if (bytes_.size() < pos_ + count * bps) fail("truncated pixel data");
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t o = pos_ + i * bps;
        raw[i] = bps == 1 ? bytes_[o] : static_cast<double>((bytes_[o] << 8) | bytes_[o + 1]);
      }
    } else {
      for (std::size_t i = 0; i < count; ++i) raw[i] = static_cast<double>(number());
    }
    Tensor img({3, h, w});
    auto out = img.mutable_values();
    const double inv = 1.0 / static_cast<double>(maxval);
    for (std::size_t p = 0; p < w * h; ++p) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = raw[p * channels + (color ? ch : 0)] * inv;
        if (v > 1.0) fail("sample exceeds maxval");
        out[ch * w * h + p] = v;
      }
    }
    return img;
  }

 private:
  std::vector<unsigned char> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string() + ": cannot open");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return PnmReader(std::move(bytes), path.string()).read();
}

void write_ppm(const std::filesystem::path& path, const Tensor& img) {
  check_image(img);
  if (img.size(0) != 3 && img.size(0) != 1) throw DimensionError("write_ppm needs 1 or 3 channels");
  const std::size_t c = img.size(0), h = img.size(1), w = img.size(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(path.string() + ": cannot write");
  out << "P6\n" << w << " " << h << "\n255\n";
  auto v = img.values();
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double s = v[(c == 3 ? ch : 0) * h * w + p];
      out.put(static_cast<char>(std::lround(std::clamp(s, 0.0, 1.0) * 255.0)));
    }
  }
  if (!out) throw LoadError(path.string() + ": write failed");
}

}  // namespace edgeear::image
