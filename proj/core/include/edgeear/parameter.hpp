// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "edgeear/tensor.hpp"

namespace edgeear {

// Trainable tensor exposed by a layer. `decay` marks tensors subject to
// decoupled weight decay (matrices and kernels; not norms, biases, scales).
struct Parameter {
  std::string name;
  Tensor tensor;
  bool decay = false;
};

using ParameterList = std::vector<Parameter>;

inline std::string join_name(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

}  // namespace edgeear
