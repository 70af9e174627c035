// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference oracle for gradient tests. Deliberately uses only
// forward evaluations; nothing here touches backward rules.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "edgeear/ops.hpp"
#include "edgeear/rng.hpp"
#include "edgeear/tape.hpp"
#include "edgeear/tensor.hpp"

namespace edgeear::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  Tensor t(std::move(shape), requires_grad);
  Rng rng(seed);
  for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
  return t;
}

// Reduces an arbitrary-shaped output to a scalar with fixed random weights so
// every output element contributes a distinct sensitivity.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed = 99) {
  Tensor w = random_tensor(y.shape(), seed, -1.0, 1.0, false);
  return sum(mul(y, w));
}

struct GradCheck {
  double max_rel_error = 0.0;  // over inputs: max|a-n| / max(max|a|, max|n|)
  std::size_t checked = 0;
};

// `loss` must rebuild the computation from the current values of `inputs`.
// When `indices_per_input` is nonzero, that many entries per input are
// sampled instead of checking every entry.
inline GradCheck gradcheck(const std::function<Tensor()>& loss, std::vector<Tensor> inputs, double h = 1e-5,
                           std::size_t indices_per_input = 0, std::uint64_t seed = 7) {
  for (auto& t : inputs) t.clear_grad();
  {
    GradTape tape;
    TapeScope scope(tape);
    Tensor l = loss();
    tape.backward(l);
  }
  GradCheck result;
  Rng rng(seed);
  for (auto& t : inputs) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    std::vector<std::size_t> idx;
    if (indices_per_input == 0 || indices_per_input >= t.numel()) {
      for (std::size_t i = 0; i < t.numel(); ++i) idx.push_back(i);
    } else {
      for (std::size_t i = 0; i < indices_per_input; ++i) idx.push_back(rng.index(t.numel()));
    }
    double max_diff = 0.0, scale = 0.0;
    for (std::size_t i : idx) {
      auto v = t.mutable_values();
      const double orig = v[i];
      v[i] = orig + h;
      const double fp = loss().item();
      v[i] = orig - h;
      const double fm = loss().item();
      v[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
      scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
      ++result.checked;
    }
    const double rel = scale > 0.0 ? max_diff / scale : max_diff;
    result.max_rel_error = std::max(result.max_rel_error, rel);
  }
  return result;
}

}  // namespace edgeear::testing
