// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "edgeear/error.hpp"
#include "edgeear/loralin.hpp"
#include "edgeear/ops.hpp"
#include "gradcheck.hpp"

using namespace edgeear;
using edgeear::testing::gradcheck;
using edgeear::testing::random_tensor;
using edgeear::testing::weighted_sum;

TEST_CASE("rank_for") {
  CHECK(rank_for(512, 512, 0.5) == 256);
  CHECK(rank_for(8, 8, 0.1) == 2);
  CHECK(rank_for(576, 192, 0.6) == 115);
  CHECK(rank_for(100, 100, 0.29) == 29);
  CHECK_THROWS_AS(rank_for(8, 8, 0.0), ConfigError);
  CHECK_THROWS_AS(rank_for(8, 8, 1.01), ConfigError);
  CHECK_THROWS_AS(rank_for(8, 8, -0.5), ConfigError);
}

TEST_CASE("rank_for is monotone in gamma and in min(M, N)") {
  for (std::size_t m = 1; m <= 40; ++m) {
    for (std::size_t n = 1; n <= 40; n += 3) {
      std::size_t prev = 0;
      for (int k = 1; k <= 100; ++k) {
        const std::size_t r = rank_for(m, n, k / 100.0);
        CHECK(r >= prev);
        prev = r;
        if (m > 1) CHECK(rank_for(m, n, k / 100.0) >= rank_for(m - 1, n, k / 100.0));
      }
    }
  }
}

TEST_CASE("parameter accounting") {
  LoRaLinLayer l(192, 576, 0.5);
  CHECK(l.rank() == 96);
  CHECK(l.parameter_count() == 74304);
  CHECK(loralin_parameter_count(576, 192, 0.5) == 74304);
  CHECK(linear_parameter_count(576, 192) == 111168);
  CHECK(param_savings(576, 192, 0.5) == 111168 - 74304);

  CHECK(loralin_parameter_count(512, 512, 0.5) == 262656);
  CHECK(linear_parameter_count(512, 512) == 262656);
  CHECK(param_savings(512, 512, 0.5) == 0);
  CHECK(param_savings(512, 512, 0.7) < 0);

  std::size_t prev = 0;
  for (int k = 1; k <= 10; ++k) {
    const std::size_t c = loralin_parameter_count(256, 256, k / 10.0);
    CHECK(c >= prev);
    prev = c;
  }
}

TEST_CASE("low-rank count is smaller exactly when r(M+N) < MN") {
  for (std::size_t m = 1; m <= 64; ++m)
    for (std::size_t n = 1; n <= 64; ++n)
      for (int k = 5; k <= 100; k += 5) {
        const double g = k / 100.0;
        const std::size_t r = rank_for(m, n, g);
        const bool cheaper = loralin_parameter_count(m, n, g) < linear_parameter_count(m, n);
        CHECK(cheaper == (r * (m + n) < m * n));
      }
}

TEST_CASE("loralin forward examples") {
  SUBCASE("identity factorization") {
    const std::size_t n = 4;
    Tensor eye({n, n});
    for (std::size_t i = 0; i < n; ++i) eye.mutable_values()[i * n + i] = 1.0;
    LoRaLinLayer l(eye.clone(), eye.clone(), Tensor({n}), 1.0);
    Tensor x = random_tensor({n, 3}, 1, -1, 1, false);
    Tensor y = l.forward(x);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);
  }
  SUBCASE("bias only") {
    LoRaLinLayer l(3, 2, 1.0);
    l.xavier_init(3);
    Tensor down = l.down();
    for (double& v : down.mutable_values()) v = 0.0;
    Tensor bias = l.bias();
    bias.mutable_values()[0] = 0.25;
    bias.mutable_values()[1] = -2.0;
    Tensor y = l.forward(random_tensor({3, 5}, 2, -1, 1, false));
    for (std::size_t s = 0; s < 5; ++s) {
      CHECK(y[s] == 0.25);
      CHECK(y[5 + s] == -2.0);
    }
  }
  SUBCASE("shape mismatch") {
    LoRaLinLayer l(3, 2, 1.0);
    CHECK_THROWS_AS(l.forward(Tensor({4, 2})), DimensionError);
  }
}

TEST_CASE("full-rank collapse matches a dense layer") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const std::size_t m = 2 + rng.index(12), n = 2 + rng.index(12);
    LoRaLinLayer l(n, m, 1.0);
    l.xavier_init(seed);
    REQUIRE(l.rank() == std::min(m, n));
    Tensor b = l.bias();
    for (double& v : b.mutable_values()) v = rng.uniform(-1, 1);
    LinearLayer dense(l.composed_weight(), l.bias().detach());
    Tensor x = random_tensor({2, n, 5}, seed + 50, -1, 1, false);
    Tensor y1 = l.forward(x);
    Tensor y2 = dense.forward(x);
    for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(std::abs(y1[i] - y2[i]) < 1e-9);
  }
}

TEST_CASE("loralin gradients w.r.t. both factors and bias") {
  LoRaLinLayer l(6, 5, 0.5);
  l.xavier_init(11);
  Tensor b = l.bias();
  for (double& v : b.mutable_values()) v = 0.1;
  Tensor x = random_tensor({2, 6, 3}, 12);
  auto r = gradcheck([&] { return weighted_sum(l.forward(x)); }, {l.down(), l.up(), l.bias(), x});
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("xavier initialization") {
  LoRaLinLayer a(192, 576, 0.5), b(192, 576, 0.5);
  a.xavier_init(42);
  b.xavier_init(42);
  for (std::size_t i = 0; i < a.down().numel(); ++i) CHECK(a.down()[i] == b.down()[i]);
  for (std::size_t i = 0; i < a.up().numel(); ++i) CHECK(a.up()[i] == b.up()[i]);

  REQUIRE(a.down().shape() == Shape{96, 192});
  const double bound = std::sqrt(6.0 / (96.0 + 192.0));
  for (double v : a.down().values()) CHECK(std::abs(v) <= bound);
  const double up_bound = std::sqrt(6.0 / (96.0 + 576.0));
  for (double v : a.up().values()) CHECK(std::abs(v) <= up_bound);
  for (double v : a.bias().values()) CHECK(v == 0.0);

  Tensor big({100000});
  xavier_uniform(big, 30, 70, 5);
  double mu = 0, var = 0;
  for (double v : big.values()) mu += v;
  mu /= 1e5;
  for (double v : big.values()) var += (v - mu) * (v - mu);
  var /= 1e5;
  CHECK(std::abs(var - 2.0 / 100.0) < 0.05 * 2.0 / 100.0);
}

TEST_CASE("projection json entry") {
  Projection p(192, 576, 0.5);
  const auto j = p.to_json();
  CHECK(j == nlohmann::json{{"type", "loralin"}, {"in", 192}, {"out", 576}, {"gamma", 0.5}});
  Projection q = Projection::from_json(j);
  CHECK(q.is_low_rank());
  CHECK(q.rank() == 96);
  CHECK_FALSE(Projection::from_json({{"type", "linear"}, {"in", 3}, {"out", 4}}).is_low_rank());
  CHECK_THROWS_AS(Projection::from_json({{"type", "conv"}, {"in", 3}, {"out", 4}}), ConfigError);
}
