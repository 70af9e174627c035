// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "edgeear/error.hpp"

namespace edgeear {

struct Tensor::Impl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
};

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  impl_->data.assign(shape_numel(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " cannot hold " +
                         std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

static const Shape kEmptyShape{};

const Shape& Tensor::shape() const { return impl_ ? impl_->shape : kEmptyShape; }

std::size_t Tensor::size(int axis) const {
  const auto r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  }
  return shape()[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::values() const {
  if (!impl_) return {};
  return impl_->data;
}

std::span<double> Tensor::mutable_values() {
  if (!impl_) return {};
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (impl_) impl_->requires_grad = on;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!impl_) return {};
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() const {
  if (!impl_) return {};
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::clear_grad() const {
  if (impl_) {
    impl_->grad.clear();
    impl_->grad.shrink_to_fit();
  }
}

Tensor Tensor::detach() const {
  if (!impl_) return {};
  return Tensor(impl_->shape, impl_->data);
}

bool Tensor::all_finite() const {
  const auto v = values();
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace edgeear
