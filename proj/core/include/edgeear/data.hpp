// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgeear/tensor.hpp"

namespace edgeear {

struct Subgroup {
  std::string gender;
  std::string ethnicity;

  // "gender|ethnicity", the key of a subgroup cell.
  std::string cell() const { return gender + "|" + ethnicity; }
  bool operator==(const Subgroup&) const = default;
};

struct Sample {
  std::string sample_id;
  std::string identity;
  Tensor image;  // [3 x H x W], values in [0, 1]
  std::optional<Subgroup> subgroup;
};

inline constexpr std::size_t kImageSize = 128;

// Round-robin tags used by the synthetic generator: gender alternates with
// every identity, ethnicity with every second one.
Subgroup synthetic_subgroup(std::size_t identity_index);

// Procedural ear-like identities. The pattern of identity i depends only on
// id_offset + i; `seed` drives the per-sample jitter. Throws ContractError
// when num_ids < 2 or samples_per_id == 0.
std::vector<Sample> synth_dataset(std::size_t num_ids, std::size_t samples_per_id, std::uint64_t seed,
                                  std::size_t id_offset = 0, std::size_t size = kImageSize);

// Transform magnitudes. Every range is symmetric around the identity unless
// noted; a zero disables the transform.
struct AugmentationConfig {
  double rotation_degrees = 15.0;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  double hue = 0.0;  // fraction of a full turn
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  double affine_degrees = 0.0;
  double affine_translate = 0.1;  // fraction of the image side
  double affine_scale = 0.1;      // scale drawn from [1 - s, 1 + s]
  double affine_shear = 5.0;      // degrees
  double crop_scale_min = 0.8;    // kept area fraction drawn from [min, 1]
  double blur_sigma_max = 1.0;    // sigma drawn from [0, max]
  std::size_t target_size = kImageSize;

  // Every transform disabled; only the final resize remains.
  static AugmentationConfig none();

  void validate() const;
  nlohmann::json to_json() const;
  static AugmentationConfig from_json(const nlohmann::json& j);
};

// Rotation, colour jitter, horizontal flip, vertical flip, affine, crop,
// blur, resize, clamp to [0, 1]. Deterministic in `seed`.
Sample augment(const Sample& sample, const AugmentationConfig& config, std::uint64_t seed);

// Loads `<root>/<identity>/<image>` for PPM/PGM images, sorted by identity
// then file name, each resized to size x size. Subgroups come from an
// optional `<root>/metadata.csv` (header `id,gender,ethnicity`). Unreadable
// files are collected into one LoadError.
std::vector<Sample> load_dir(const std::filesystem::path& root, std::size_t size = kImageSize);

// Identity -> subgroup rows of a metadata CSV with columns id, gender and
// ethnicity in any order. Throws LoadError.
std::map<std::string, Subgroup> read_metadata(const std::filesystem::path& path);

// Sorted distinct identities and the per-sample class index into them.
struct LabelMap {
  std::vector<std::string> identities;
  std::vector<std::size_t> labels;
};
LabelMap label_samples(std::span<const Sample> samples);

// Stacks images [3 x H x W] into [B x 3 x H x W].
Tensor stack_images(std::span<const Sample> samples);

}  // namespace edgeear
