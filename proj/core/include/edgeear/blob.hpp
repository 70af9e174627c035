// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgeear/tensor.hpp"

namespace edgeear {

// Binary tensor container used for checkpoints and embedding dumps:
//
//   bytes 0..7    magic "EDGEEAR1"
//   bytes 8..15   header length L, uint64 little-endian
//   next L bytes  JSON header {"tensors":[{"name","shape","offset"}], "meta":{...}}
//   remainder     concatenated float64 little-endian values; offsets count
//                 values, not bytes
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Blob {
  std::vector<NamedTensor> tensors;
  nlohmann::json meta = nlohmann::json::object();

  const Tensor& at(const std::string& name) const;
};

void save_blob(const std::filesystem::path& path, std::span<const NamedTensor> tensors,
               const nlohmann::json& meta = nlohmann::json::object());
Blob load_blob(const std::filesystem::path& path);

void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace edgeear
