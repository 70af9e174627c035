// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "edgeear/backbone.hpp"
#include "edgeear/loralin.hpp"
#include "edgeear/ops.hpp"
#include "edgeear/rng.hpp"

using namespace edgeear;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(shape);
  Rng rng(seed);
  for (double& v : t.mutable_values()) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_DepthwiseConv(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({1, c, 16, 16}, 3), w = random_tensor({c, 1, 7, 7}, 4);
  Conv2dParams p;
  p.padding = 3;
  p.groups = c;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, p));
}
BENCHMARK(BM_DepthwiseConv)->Arg(64)->Arg(160);

void BM_DenseLinear(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const LinearLayer layer(d, 4 * d);
  const Tensor x = random_tensor({d, 64}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(layer.forward(x));
}
BENCHMARK(BM_DenseLinear)->Arg(160)->Arg(304);

void BM_LoRaLin(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const LoRaLinLayer layer(d, 4 * d, 0.6);
  const Tensor x = random_tensor({d, 64}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(layer.forward(x));
}
BENCHMARK(BM_LoRaLin)->Arg(160)->Arg(304);

void BM_TinyForward(benchmark::State& state) {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.input_size = static_cast<std::size_t>(state.range(0));
  const EdgeEarModel model(cfg, 7);
  const Tensor x = random_tensor({4, cfg.in_channels, cfg.input_size, cfg.input_size}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward_embed(x));
}
BENCHMARK(BM_TinyForward)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
