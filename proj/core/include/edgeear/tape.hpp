// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "edgeear/tensor.hpp"

namespace edgeear {

// Ordered record of differentiable ops. Ops append a backward rule while a
// tape is active on the current thread (see TapeScope) and at least one
// input requires a gradient.
class GradTape {
 public:
  using Rule = std::function<void()>;

  void record(Rule rule) { rules_.push_back(std::move(rule)); }

  // Seeds d(loss)/d(loss) = 1 and replays the rules in reverse recording
  // order, accumulating into every reachable requires_grad tensor. The tape is
  // empty afterwards. Throws ContractError if loss is not a scalar.
  void backward(const Tensor& loss);

  void clear() { rules_.clear(); }
  std::size_t size() const { return rules_.size(); }
  bool empty() const { return rules_.empty(); }

 private:
  std::vector<Rule> rules_;
};

// Makes `tape` the active tape of this thread for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* previous_;
};

GradTape* active_tape();

}  // namespace edgeear
