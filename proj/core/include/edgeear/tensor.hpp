// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace edgeear {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. A Tensor is a shared handle: copies
// alias the same storage, which is how the gradient tape refers to op inputs
// and outputs. Use clone() or detach() for an independent copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value);
  static Tensor full(Shape shape, double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  // Extent along axis; negative axes count from the back.
  std::size_t size(int axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // Direct write access, used by initializers and the optimizer between
  // steps. Writing to a tensor that the active tape refers to invalidates
  // the recorded backward pass.
  std::span<double> mutable_values();
  double operator[](std::size_t i) const { return values()[i]; }
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  // Gradient state is accumulated through shared handles by the tape, so
  // these are const on the handle. Allocates a zero buffer on first use.
  std::span<double> mutable_grad() const;
  void zero_grad() const;
  void clear_grad() const;

  // New storage with the same values and no grad/tape participation.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool is_same(const Tensor& other) const { return impl_ == other.impl_; }

  // True when every value is finite.
  bool all_finite() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

}  // namespace edgeear
