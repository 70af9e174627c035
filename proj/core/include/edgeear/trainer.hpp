// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgeear/backbone.hpp"
#include "edgeear/data.hpp"
#include "edgeear/evaluation.hpp"
#include "edgeear/losses.hpp"
#include "edgeear/parameter.hpp"

namespace edgeear {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// Adam with decoupled weight decay. Decay touches only parameters flagged
// `decay`; parameters without a gradient buffer are left alone.
class AdamW {
 public:
  AdamW(ParameterList params, AdamWConfig config);

  // p <- p - lr * wd * p, then p <- p - lr * m_hat / (sqrt(v_hat) + eps).
  // Throws NumericError naming the parameter when a gradient is not finite;
  // nothing is updated in that case.
  void step(double lr);

  std::size_t steps() const { return t_; }
  const ParameterList& parameters() const { return params_; }
  std::span<const double> first_moment(std::size_t i) const { return m_.at(i); }
  std::span<const double> second_moment(std::size_t i) const { return v_.at(i); }

 private:
  ParameterList params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

// lr0 * (1 + cos(pi * step / total_steps)) / 2. Throws ContractError when
// step > total_steps.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

struct TrainConfig {
  double lr = 3e-3;
  AdamWConfig adamw;
  std::size_t batch_size = 32;   // the reference recipe used 256
  std::size_t max_epochs = 300;  // the reference recipe ran up to 1200
  std::size_t max_steps = 0;     // 0: no cap beyond max_epochs
  std::size_t patience = 10;     // epochs without validation improvement
  double val_fraction = 0.2;     // per identity
  LossConfig loss;
  bool augment = true;
  AugmentationConfig augmentation;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the field.
  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean over the epoch's steps
  double val_loss = 0.0;    // NaN without a validation split
  bool improved = false;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
  std::vector<std::string> classes;
  std::optional<ClassificationHead> head;  // alongside the restored weights

  double initial_loss() const;
  // Mean of the last (up to) ten step losses.
  double final_loss() const;
  void write_history_csv(const std::filesystem::path& path) const;
  void write_steps_csv(const std::filesystem::path& path) const;
};

// Deterministic per-identity split: floor(fraction * n) samples of each
// identity go to validation, picked by a permutation drawn from `seed`.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split split_per_identity(std::span<const Sample> samples, double fraction, std::uint64_t seed);

// Trains the backbone with a fresh classification head over the identities
// of `samples`. Early stopping watches the validation loss (the training
// epoch loss when the split is empty) and the best epoch's weights are
// restored at the end. Throws ContractError on fewer than two identities and
// NumericError on a non-finite loss or gradient.
TrainResult fit(EdgeEarModel& model, std::span<const Sample> samples, const TrainConfig& config);

// Embeddings of `samples` in batches, without augmentation.
EmbeddingSet embed_samples(const EdgeEarModel& model, std::span<const Sample> samples, std::size_t batch_size = 32);

// config.json (model + train), weights.bin, history.csv and steps.csv.
void save_checkpoint(const std::filesystem::path& dir, const EdgeEarModel& model, const TrainConfig& config,
                     const TrainResult& result);
// Rebuilds the model from config.json and weights.bin. Throws LoadError.
EdgeEarModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace edgeear
