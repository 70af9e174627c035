// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "edgeear/evaluation.hpp"
#include "edgeear/rng.hpp"

using namespace edgeear;

namespace {

// ids x per embeddings of width 64, identity centroid plus noise.
EmbeddingSet fixture(std::size_t ids, std::size_t per) {
  constexpr std::size_t kDim = 64;
  EmbeddingSet set;
  set.vectors = Tensor({ids * per, kDim});
  auto v = set.vectors.mutable_values();
  Rng rng(11);
  std::vector<double> centre(kDim);
  for (std::size_t i = 0; i < ids; ++i) {
    for (double& c : centre) c = rng.normal();
    for (std::size_t s = 0; s < per; ++s) {
      const std::size_t row = i * per + s;
      for (std::size_t k = 0; k < kDim; ++k) v[row * kDim + k] = centre[k] + 0.8 * rng.normal();
      set.sample_ids.push_back("id" + std::to_string(i) + "/" + std::to_string(s));
      set.identities.push_back("id" + std::to_string(i));
      set.subgroups.push_back(synthetic_subgroup(i));
    }
  }
  return set;
}

void BM_CosineMatrix(benchmark::State& state) {
  const EmbeddingSet set = fixture(static_cast<std::size_t>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(cosine_matrix(set, set));
}
BENCHMARK(BM_CosineMatrix)->Arg(50)->Arg(200);

void BM_Evaluate(benchmark::State& state) {
  const EmbeddingSet set = fixture(static_cast<std::size_t>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(set));
}
BENCHMARK(BM_Evaluate)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace
