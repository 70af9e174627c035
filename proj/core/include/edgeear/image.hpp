// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>

#include "edgeear/tensor.hpp"

// Planar float images, [C x H x W], values nominally in [0, 1].
namespace edgeear::image {

// Row-major 2x3 matrix mapping output pixel centres (x, y) to source
// coordinates: src = A * (x, y, 1).
using Affine = std::array<double, 6>;

// Bilinear sampling with replicate border. Source pixel (i, j) is centred at
// (j, i).
Tensor warp(const Tensor& img, const Affine& out_to_src, std::size_t out_h, std::size_t out_w);

// Maps the source rectangle [x0, x0 + w) x [y0, y0 + h) onto an out_h x out_w
// grid with half-pixel alignment. An identical-size full-frame resize is the
// identity.
Tensor resize_region(const Tensor& img, double x0, double y0, double w, double h, std::size_t out_h,
                     std::size_t out_w);
Tensor resize(const Tensor& img, std::size_t out_h, std::size_t out_w);

// Rotation by `degrees` counter-clockwise, combined with scale, shear
// (degrees, along x) and translation (pixels), all about the image centre.
Tensor affine(const Tensor& img, double degrees, double scale, double shear_degrees, double tx, double ty);

Tensor flip_horizontal(const Tensor& img);
Tensor flip_vertical(const Tensor& img);

// Separable Gaussian, radius ceil(3 sigma), replicate border. sigma <= 0 is
// the identity.
Tensor gaussian_blur(const Tensor& img, double sigma);

void clamp01(Tensor& img);

// Binary or ASCII PGM/PPM (P2, P3, P5, P6). Grey images are replicated to
// three channels. Throws LoadError.
Tensor read_pnm(const std::filesystem::path& path);
// Writes a binary P6 with 8-bit samples.
void write_ppm(const std::filesystem::path& path, const Tensor& img);

}  // namespace edgeear::image
