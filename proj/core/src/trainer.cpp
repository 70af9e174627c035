// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>

#include <spdlog/spdlog.h>

#include "edgeear/blob.hpp"
#include "edgeear/error.hpp"
#include "edgeear/parallel.hpp"
#include "edgeear/rng.hpp"
#include "edgeear/tape.hpp"

namespace edgeear {

AdamW::AdamW(ParameterList params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0)) throw ConfigError("adamw.beta1: must lie in [0, 1)");
  if (!(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) throw ConfigError("adamw.beta2: must lie in [0, 1)");
  if (!(config_.eps > 0.0)) throw ConfigError("adamw.eps: must be positive");
  if (!(config_.weight_decay >= 0.0)) throw ConfigError("adamw.weight_decay: must be non-negative");
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step(double lr) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Parameter& p = params_[i];
    if (!p.tensor.has_grad()) continue;
    Tensor handle = p.tensor;
    auto w = handle.mutable_values();
    const auto g = p.tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    const double shrink = p.decay ? 1.0 - lr * config_.weight_decay : 1.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      w[k] *= shrink;
      w[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + config_.eps);
    }
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (step > total_steps) {
    throw ContractError("cosine_lr: step " + std::to_string(step) + " beyond " + std::to_string(total_steps));
  }
  if (total_steps == 0) return lr0;
  if (step == total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr: must be positive");
  if (!(adamw.weight_decay >= 0.0)) throw ConfigError("train.weight_decay: must be non-negative");
  if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0)) throw ConfigError("train.beta1: must lie in [0, 1)");
  if (!(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0)) throw ConfigError("train.beta2: must lie in [0, 1)");
  if (!(adamw.eps > 0.0)) throw ConfigError("train.eps: must be positive");
  if (batch_size < 2) throw ConfigError("train.batch_size: must be at least 2");
  if (max_epochs == 0) throw ConfigError("train.max_epochs: must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction: must lie in [0, 1)");
  loss.validate();
  augmentation.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"weight_decay", adamw.weight_decay},
          {"beta1", adamw.beta1},
          {"beta2", adamw.beta2},
          {"eps", adamw.eps},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"max_steps", max_steps},
          {"patience", patience},
          {"val_fraction", val_fraction},
          {"augment", augment},
          {"seed", seed},
          {"loss", loss.to_json()},
          {"augmentation", augmentation.to_json()}};
}

namespace {

std::size_t get_count(const nlohmann::json& v) {
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer()) {
    const auto i = v.get<std::int64_t>();
    if (i < 0) throw ConfigError("negative");
    return static_cast<std::size_t>(i);
  }
  throw nlohmann::json::type_error::create(302, "expected an integer", &v);
}

}  // namespace

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (!j.is_object()) throw ConfigError("train: expected a table");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr") {
        c.lr = value.get<double>();
      } else if (key == "weight_decay") {
        c.adamw.weight_decay = value.get<double>();
      } else if (key == "beta1") {
        c.adamw.beta1 = value.get<double>();
      } else if (key == "beta2") {
        c.adamw.beta2 = value.get<double>();
      } else if (key == "eps") {
        c.adamw.eps = value.get<double>();
      } else if (key == "batch_size") {
        c.batch_size = get_count(value);
      } else if (key == "max_epochs") {
        c.max_epochs = get_count(value);
      } else if (key == "max_steps") {
        c.max_steps = get_count(value);
      } else if (key == "patience") {
        c.patience = get_count(value);
      } else if (key == "val_fraction") {
        c.val_fraction = value.get<double>();
      } else if (key == "augment") {
        c.augment = value.get<bool>();
      } else if (key == "seed") {
        c.seed = static_cast<std::uint64_t>(get_count(value));
      } else if (key == "loss") {
        c.loss = LossConfig::from_json(value);
      } else if (key == "augmentation") {
        c.augmentation = AugmentationConfig::from_json(value);
      } else {
        throw ConfigError("train." + key + ": unknown key");
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("train." + key + ": wrong type");
    } catch (const ConfigError& e) {
      if (std::string(e.what()) == "negative") throw ConfigError("train." + key + ": must be non-negative");
      throw;
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

double TrainResult::initial_loss() const {
  if (steps.empty()) throw ContractError("no training steps recorded");
  return steps.front().loss;
}

double TrainResult::final_loss() const {
  if (steps.empty()) throw ContractError("no training steps recorded");
  const std::size_t n = std::min<std::size_t>(10, steps.size());
  double s = 0.0;
  for (std::size_t i = steps.size() - n; i < steps.size(); ++i) s += steps[i].loss;
  return s / static_cast<double>(n);
}

void TrainResult::write_history_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw LoadError(path.string() + ": cannot write");
  out << "epoch,train_loss,val_loss,improved\n";
  char buf[128];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%d\n", e.epoch, e.train_loss, e.val_loss, e.improved ? 1 : 0);
    out << buf;
  }
}

void TrainResult::write_steps_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw LoadError(path.string() + ": cannot write");
  out << "step,epoch,lr,loss\n";
  char buf[128];
  for (const auto& s : steps) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g\n", s.step, s.epoch, s.lr, s.loss);
    out << buf;
  }
}

Split split_per_identity(std::span<const Sample> samples, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ContractError("validation fraction must lie in [0, 1)");
  std::map<std::string, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < samples.size(); ++i) by_id[samples[i].identity].push_back(i);
  Split split;
  std::size_t k = 0;
  for (auto& [id, rows] : by_id) {
    Rng rng = Rng::derive(seed, k++);
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.index(i)]);
    const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(rows.size()) + 1e-9));
    for (std::size_t i = 0; i < rows.size(); ++i) (i < n_val ? split.val : split.train).push_back(rows[i]);
  }
  std::ranges::sort(split.train);
  std::ranges::sort(split.val);
  return split;
}

namespace {

// Seed streams carved out of TrainConfig::seed.
enum Stream : std::uint64_t { kHead = 1, kShuffle = 2, kAugment = 3, kSplit = 4 };

std::vector<Sample> prepare(std::span<const Sample> samples, std::span<const std::size_t> rows,
                            const AugmentationConfig& cfg, const std::function<std::uint64_t(std::size_t)>& seed_of) {
  std::vector<Sample> out(rows.size());
  parallel_for(rows.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = augment(samples[rows[i]], cfg, seed_of(rows[i]));
  });
  return out;
}

using Snapshot = std::vector<std::vector<double>>;

Snapshot snapshot(const ParameterList& params) {
  Snapshot s;
  for (const auto& p : params) s.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return s;
}

void restore(const ParameterList& params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor handle = params[i].tensor;
    std::ranges::copy(s[i], handle.mutable_values().begin());
  }
}

}  // namespace

TrainResult fit(EdgeEarModel& model, std::span<const Sample> samples, const TrainConfig& config) {
  config.validate();
  const LabelMap labels = label_samples(samples);
  if (labels.identities.size() < 2) throw ContractError("training needs at least two identities");

  const std::size_t input = model.config().input_size;
  AugmentationConfig train_aug = config.augment ? config.augmentation : AugmentationConfig::none();
  AugmentationConfig plain = AugmentationConfig::none();
  train_aug.target_size = input;
  plain.target_size = input;

  ClassificationHead head(labels.identities.size(), model.config().embedding_dim, config.loss.head_mode(),
                          Rng::derive(config.seed, kHead).next_u64());
  ParameterList params = model.parameters();
  head.collect_parameters("head_classifier", params);
  AdamW opt(params, config.adamw);

  const Split split = split_per_identity(samples, config.val_fraction, Rng::derive(config.seed, kSplit).next_u64());
  TrainResult result;
  result.classes = labels.identities;
  result.train_samples = split.train.size();
  result.val_samples = split.val.size();

  const std::size_t bs = config.batch_size;
  const std::size_t per_epoch = (split.train.size() + bs - 1) / bs;
  std::size_t total = per_epoch * config.max_epochs;
  if (config.max_steps > 0) total = std::min(total, config.max_steps);
  const std::uint64_t shuffle_seed = Rng::derive(config.seed, kShuffle).next_u64();
  const std::uint64_t aug_seed = Rng::derive(config.seed, kAugment).next_u64();
  const std::size_t n = samples.size();

  // The validation images never change, so they are prepared once.
  const std::vector<Sample> val_images = prepare(samples, split.val, plain, [](std::size_t) { return 0; });
  std::map<std::string, std::size_t> class_of;
  for (std::size_t c = 0; c < labels.identities.size(); ++c) class_of[labels.identities[c]] = c;
  auto targets_of = [&](std::span<const Sample> batch) {
    std::vector<std::size_t> t;
    for (const auto& s : batch) t.push_back(class_of.at(s.identity));
    return t;
  };

  double best = std::numeric_limits<double>::infinity();
  Snapshot best_weights;
  std::size_t bad_epochs = 0, step = 0;
  spdlog::info("fit: {} train / {} val samples, {} classes, {} steps", split.train.size(), split.val.size(),
               labels.identities.size(), total);

  for (std::size_t epoch = 0; epoch < config.max_epochs && step < total; ++epoch) {
    std::vector<std::size_t> order = split.train;
    Rng rng = Rng::derive(shuffle_seed, epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

    double epoch_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t b = 0; b < per_epoch && step < total; ++b) {
      const std::size_t lo = b * bs, hi = std::min(order.size(), lo + bs);
      const std::span<const std::size_t> rows(order.data() + lo, hi - lo);
      const auto batch = prepare(samples, rows, train_aug, [&](std::size_t idx) {
        return Rng::derive(aug_seed, epoch * n + idx).next_u64();
      });
      const Tensor x = stack_images(batch);
      const auto targets = targets_of(batch);
      const double lr = cosine_lr(step, total, config.lr);

      for (const auto& p : params) p.tensor.zero_grad();
      GradTape tape;
      double value = 0.0;
      {
        TapeScope scope(tape);
        const Tensor loss = compute_loss(config.loss, model.forward_embed(x), head, targets);
        value = loss.item();
        if (!std::isfinite(value)) {
          char msg[160];
          std::snprintf(msg, sizeof msg, "non-finite loss at step %zu (epoch %zu, lr %.3g, batch of %zu)", step,
                        epoch, lr, batch.size());
          throw NumericError(msg);
        }
        tape.backward(loss);
      }
      opt.step(lr);
      result.steps.push_back({step, epoch, lr, value});
      epoch_sum += value;
      ++epoch_steps;
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_sum / static_cast<double>(std::max<std::size_t>(1, epoch_steps));
    rec.val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!val_images.empty()) {
      double sum = 0.0;
      for (std::size_t lo = 0; lo < val_images.size(); lo += bs) {
        const std::span<const Sample> vb(val_images.data() + lo, std::min(bs, val_images.size() - lo));
        const auto t = targets_of(vb);
        sum += compute_loss(config.loss, model.forward_embed(stack_images(vb)), head, t).item() *
               static_cast<double>(vb.size());
      }
      rec.val_loss = sum / static_cast<double>(val_images.size());
      if (!std::isfinite(rec.val_loss)) throw NumericError("non-finite validation loss after epoch " + std::to_string(epoch));
    }
    const double monitored = val_images.empty() ? rec.train_loss : rec.val_loss;
    if (monitored < best) {
      best = monitored;
      result.best_epoch = epoch;
      best_weights = snapshot(params);
      bad_epochs = 0;
      rec.improved = true;
    } else {
      ++bad_epochs;
    }
    result.epochs.push_back(rec);
    spdlog::debug("fit: epoch {} train {:.5f} val {:.5f}", epoch, rec.train_loss, rec.val_loss);
    if (!rec.improved && bad_epochs > config.patience) {
      result.stopped_early = true;
      spdlog::info("fit: early stop after epoch {}, best epoch {}", epoch, result.best_epoch);
      break;
    }
  }
  if (!best_weights.empty() && result.best_epoch + 1 != result.epochs.size()) restore(params, best_weights);
  result.head = head;
  return result;
}

EmbeddingSet embed_samples(const EdgeEarModel& model, std::span<const Sample> samples, std::size_t batch_size) {
  if (samples.empty()) throw ContractError("nothing to embed");
  if (batch_size == 0) throw ContractError("batch size must be positive");
  AugmentationConfig plain = AugmentationConfig::none();
  plain.target_size = model.config().input_size;
  const std::size_t d = model.config().embedding_dim;
  EmbeddingSet set;
  std::vector<double> flat;
  flat.reserve(samples.size() * d);
  for (std::size_t lo = 0; lo < samples.size(); lo += batch_size) {
    const std::size_t hi = std::min(samples.size(), lo + batch_size);
    std::vector<Sample> batch;
    for (std::size_t i = lo; i < hi; ++i) {
      const Sample& s = samples[i];
      batch.push_back(s.image.size(1) == plain.target_size && s.image.size(2) == plain.target_size
                          ? s
                          : augment(s, plain, 0));
    }
    const Tensor e = model.forward_embed(stack_images(batch));
    flat.insert(flat.end(), e.values().begin(), e.values().end());
  }
  for (const auto& s : samples) {
    set.sample_ids.push_back(s.sample_id);
    set.identities.push_back(s.identity);
    set.subgroups.push_back(s.subgroup);
  }
  set.vectors = Tensor({samples.size(), d}, std::move(flat));
  return set;
}

void save_checkpoint(const std::filesystem::path& dir, const EdgeEarModel& model, const TrainConfig& config,
                     const TrainResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw LoadError(dir.string() + ": cannot create directory: " + ec.message());
  const nlohmann::json j{{"model", model.config().to_json()},
                         {"train", config.to_json()},
                         {"classes", result.classes},
                         {"best_epoch", result.best_epoch},
                         {"stopped_early", result.stopped_early}};
  std::ofstream out(dir / "config.json");
  if (!out) throw LoadError((dir / "config.json").string() + ": cannot write");
  out << j.dump(2) << "\n";
  const Blob blob = model.parameter_blob();
  save_blob(dir / "weights.bin", blob.tensors, blob.meta);
  result.write_history_csv(dir / "history.csv");
  result.write_steps_csv(dir / "steps.csv");
}

EdgeEarModel load_checkpoint(const std::filesystem::path& dir) {
  const auto cfg_path = dir / "config.json";
  std::ifstream in(cfg_path);
  if (!in) throw LoadError(cfg_path.string() + ": cannot open");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(cfg_path.string() + ": " + e.what());
  }
  if (!j.contains("model")) throw LoadError(cfg_path.string() + ": missing 'model'");
  EdgeEarModel model(ModelConfig::from_json(j.at("model")), 0);
  model.load_parameters(load_blob(dir / "weights.bin"));
  return model;
}

}  // namespace edgeear
