// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/tape.hpp"

#include "edgeear/error.hpp"

namespace edgeear {

namespace {
thread_local GradTape* g_active_tape = nullptr;
}

GradTape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(GradTape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void GradTape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  // Rules may not record new ops; detach the active tape while replaying.
  GradTape* saved = g_active_tape;
  g_active_tape = nullptr;
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
  g_active_tape = saved;
  rules_.clear();
}

}  // namespace edgeear
