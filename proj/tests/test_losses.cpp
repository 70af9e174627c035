// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "edgeear/error.hpp"
#include "edgeear/losses.hpp"
#include "edgeear/ops.hpp"
#include "gradcheck.hpp"

using namespace edgeear;
using edgeear::testing::gradcheck;
using edgeear::testing::random_tensor;

namespace {

// Plain-arithmetic smoothed CE for one row.
double ce_row(const std::vector<double>& z, std::size_t target, double eps) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  const double k = static_cast<double>(z.size());
  double loss = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double q = (j == target ? 1.0 - eps : 0.0) + eps / k;
    loss -= q * (z[j] - lse);
  }
  return loss;
}

std::vector<double> row(const Tensor& t, std::size_t i) {
  const std::size_t k = t.size(1);
  return {t.values().begin() + static_cast<std::ptrdiff_t>(i * k),
          t.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * k)};
}

}  // namespace

TEST_CASE("uniform logits give ln K") {
  for (std::size_t k : {2ul, 5ul, 1474ul}) {
    for (double eps : {0.0, 0.1, 0.5}) {
      const Tensor z = Tensor::full({3, k}, 0.25);
      const std::vector<std::size_t> t{0, k - 1, k / 2};
      CHECK(ce_label_smoothing(z, t, eps).item() == doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));
    }
  }
}

TEST_CASE("epsilon = 0 is plain cross-entropy") {
  const Tensor z = random_tensor({4, 6}, 1, -3, 3, false);
  const std::vector<std::size_t> t{5, 0, 2, 2};
  CHECK(std::abs(ce_label_smoothing(z, t, 0.0).item() - cross_entropy(z, t).item()) < 1e-12);
  double expected = 0.0;
  for (std::size_t i = 0; i < 4; ++i) expected += ce_row(row(z, i), t[i], 0.0) / 4;
  CHECK(std::abs(cross_entropy(z, t).item() - expected) < 1e-12);
}

TEST_CASE("smoothed CE on [10, 0, 0]") {
  const Tensor z({1, 3}, std::vector<double>{10, 0, 0});
  const std::vector<std::size_t> t{0};
  const double lse = std::log(std::exp(10.0) + 2.0);
  const double oracle = -((0.9 + 0.1 / 3) * (10 - lse) + (0.1 / 3) * 2 * (0 - lse));
  CHECK(std::abs(ce_label_smoothing(z, t, 0.1).item() - oracle) < 1e-9);
}

TEST_CASE("plain CE decreases monotonically in the target logit") {
  double prev = std::numeric_limits<double>::infinity();
  for (double zt : {-2.0, 0.0, 1.0, 3.0, 8.0, 20.0}) {
    const Tensor z({1, 4}, std::vector<double>{zt, 0.5, -0.5, 0.0});
    const double l = cross_entropy(z, std::vector<std::size_t>{0}).item();
    CHECK(l < prev);
    CHECK(l > 0.0);
    prev = l;
  }
}

TEST_CASE("smoothed CE is bounded by the target entropy and attains it at a finite logit") {
  // With the other logits at zero, p matches the smoothed target exactly at
  // z_t = ln(q_t / q_other); below that the loss decreases, above it rises.
  const double eps = 0.1, k = 4;
  const double qt = 1 - eps + eps / k, qo = eps / k;
  const double entropy = -(qt * std::log(qt) + 3 * qo * std::log(qo));
  const double z_star = std::log(qt / qo);
  auto loss_at = [&](double zt) {
    return ce_label_smoothing(Tensor({1, 4}, std::vector<double>{zt, 0, 0, 0}), std::vector<std::size_t>{0}, eps)
        .item();
  };
  CHECK(loss_at(z_star) == doctest::Approx(entropy).epsilon(1e-12));
  double prev = std::numeric_limits<double>::infinity();
  for (double zt = -3.0; zt < z_star; zt += 0.5) {
    const double l = loss_at(zt);
    CHECK(l < prev);
    CHECK(l >= entropy);
    prev = l;
  }
  CHECK(loss_at(z_star + 2) > loss_at(z_star));
  CHECK(loss_at(z_star + 10) > loss_at(z_star + 2));
}

TEST_CASE("loss contract errors") {
  const Tensor z = random_tensor({2, 3}, 1, -1, 1, false);
  CHECK_THROWS_AS(ce_label_smoothing(z, std::vector<std::size_t>{0, 3}), ContractError);
  CHECK_THROWS_AS(ce_label_smoothing(z, std::vector<std::size_t>{0}), ContractError);
  CHECK_THROWS_AS(ce_label_smoothing(Tensor({2, 1}), std::vector<std::size_t>{0, 0}), ContractError);

  ClassificationHead head(3, 4, ClassificationHead::Mode::Cosine, 1);
  Tensor e = random_tensor({2, 4}, 2, -1, 1, false);
  for (std::size_t j = 0; j < 4; ++j) e.mutable_values()[4 + j] = 0.0;
  CHECK_THROWS_AS(arcface(e, head, std::vector<std::size_t>{0, 1}), NumericError);
  CHECK_THROWS_AS(arcface(random_tensor({2, 4}, 3), head, std::vector<std::size_t>{0, 1}, 2.0), ContractError);
  CHECK_THROWS_AS(arcface(random_tensor({2, 4}, 3), head, std::vector<std::size_t>{0, 1}, 0.2, 0.0), ContractError);
}

TEST_CASE("arcface with m = 0, s = 1 is CE on cosine logits") {
  ClassificationHead head(5, 8, ClassificationHead::Mode::Cosine, 3);
  const Tensor e = random_tensor({4, 8}, 4, -1, 1, false);
  const std::vector<std::size_t> t{0, 4, 2, 1};
  const double a = arcface(e, head, t, 0.0, 1.0).item();
  const double b = cross_entropy(head.cosines(e), t).item();
  CHECK(std::abs(a - b) < 1e-12);
}

TEST_CASE("aligned embedding gets target logit s cos(m)") {
  ClassificationHead head(3, 4, ClassificationHead::Mode::Cosine, 5);
  // Embedding parallel to class 1's weight row.
  Tensor e({1, 4});
  for (std::size_t j = 0; j < 4; ++j) e.mutable_values()[j] = 2.5 * head.weight()[4 + j];
  const Tensor cos = head.cosines(e);
  const Tensor logits = scale(arc_margin(cos, std::vector<std::size_t>{1}, 0.2), 8.0);
  CHECK(logits[1] == doctest::Approx(8.0 * std::cos(0.2)).epsilon(1e-6));
}

TEST_CASE("arcface matches a step-by-step recomputation") {
  const std::size_t b = 4, k = 5, d = 6;
  ClassificationHead head(k, d, ClassificationHead::Mode::Cosine, 6);
  const Tensor e = random_tensor({b, d}, 7, -1, 1, false);
  const std::vector<std::size_t> t{3, 0, 4, 1};
  const double m = 0.2, s = 8.0;
  double expected = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double en = 0.0;
    for (std::size_t j = 0; j < d; ++j) en += e[i * d + j] * e[i * d + j];
    en = std::sqrt(en);
    std::vector<double> z(k);
    for (std::size_t c = 0; c < k; ++c) {
      double wn = 0.0, dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        wn += head.weight()[c * d + j] * head.weight()[c * d + j];
        dot += head.weight()[c * d + j] * e[i * d + j];
      }
      double cos = dot / (en * std::sqrt(wn));
      if (c == t[i]) cos = std::cos(std::acos(std::clamp(cos, -1 + 1e-7, 1 - 1e-7)) + m);
      z[c] = s * cos;
    }
    expected += ce_row(z, t[i], 0.0) / static_cast<double>(b);
  }
  CHECK(std::abs(arcface(e, head, t, m, s).item() - expected) < 1e-9);
}

TEST_CASE("both losses are equivariant to class relabeling") {
  const std::vector<std::size_t> perm{2, 0, 3, 1};  // new column j holds old class perm[j]
  std::vector<std::size_t> inverse(4);
  for (std::size_t j = 0; j < 4; ++j) inverse[perm[j]] = j;
  const std::vector<std::size_t> t{0, 3, 1};
  std::vector<std::size_t> t_new;
  for (std::size_t c : t) t_new.push_back(inverse[c]);

  const Tensor z = random_tensor({3, 4}, 8, -2, 2, false);
  Tensor zp({3, 4});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) zp.mutable_values()[i * 4 + j] = z[i * 4 + perm[j]];
  CHECK(std::abs(ce_label_smoothing(z, t).item() - ce_label_smoothing(zp, t_new).item()) < 1e-12);

  ClassificationHead head(4, 5, ClassificationHead::Mode::Cosine, 9);
  ClassificationHead permuted(4, 5, ClassificationHead::Mode::Cosine, 10);
  Tensor w = permuted.weight();
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t c = 0; c < 5; ++c) w.mutable_values()[j * 5 + c] = head.weight()[perm[j] * 5 + c];
  const Tensor e = random_tensor({3, 5}, 11, -1, 1, false);
  CHECK(std::abs(arcface(e, head, t).item() - arcface(e, permuted, t_new).item()) < 1e-12);
}

TEST_CASE("arcface is invariant to positive rescaling of embeddings") {
  ClassificationHead head(5, 6, ClassificationHead::Mode::Cosine, 12);
  const Tensor e = random_tensor({3, 6}, 13, -1, 1, false);
  const std::vector<std::size_t> t{1, 4, 0};
  const double base = arcface(e, head, t).item();
  for (double a : {1e-3, 0.5, 7.0, 1e4}) CHECK(std::abs(arcface(scale(e, a), head, t).item() - base) < 1e-12);
}

TEST_CASE("loss gradients match finite differences") {
  const std::vector<std::size_t> t{1, 0, 3};
  SUBCASE("smoothed CE through a linear head") {
    ClassificationHead head(4, 6, ClassificationHead::Mode::Linear, 14);
    Tensor e = random_tensor({3, 6}, 15);
    const auto r = gradcheck([&] { return ce_label_smoothing(head.logits(e), t, 0.1); }, {e, head.weight()});
    CHECK(r.max_rel_error < 1e-5);
  }
  SUBCASE("arcface") {
    ClassificationHead head(4, 6, ClassificationHead::Mode::Cosine, 16);
    Tensor e = random_tensor({3, 6}, 17);
    const auto r = gradcheck([&] { return arcface(e, head, t, 0.2, 8.0); }, {e, head.weight()});
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("loss config") {
  const LossConfig c = LossConfig::from_json({{"kind", "arcface"}, {"margin", 0.3}});
  CHECK(c.kind == LossConfig::Kind::ArcFace);
  CHECK(c.margin == 0.3);
  CHECK(c.scale == 8.0);
  CHECK(c.head_mode() == ClassificationHead::Mode::Cosine);
  CHECK(LossConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS_AS(LossConfig::from_json({{"kind", "triplet"}}), ConfigError);
  CHECK_THROWS_AS(LossConfig::from_json({{"gamma", 1}}), ConfigError);
  CHECK_THROWS_AS(LossConfig::from_json({{"epsilon", 1.5}}), ConfigError);

  ClassificationHead head(3, 4, ClassificationHead::Mode::Linear, 1);
  const Tensor e = random_tensor({2, 4}, 2, -1, 1, false);
  const std::vector<std::size_t> t{0, 2};
  CHECK(compute_loss(LossConfig{}, e, head, t).item() == ce_label_smoothing(head.logits(e), t, 0.1).item());
}
