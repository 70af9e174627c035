// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>

#include "edgeear/error.hpp"
#include "edgeear/evaluation.hpp"
#include "edgeear/rng.hpp"
#include "metric_oracle.hpp"

using namespace edgeear;
using namespace edgeear::testing;
namespace fs = std::filesystem;

namespace {

IdentityTable table_from(const std::vector<std::string>& probes, const std::vector<std::string>& gallery,
                         const std::vector<double>& scores) {
  IdentityTable t;
  t.probes = probes;
  t.gallery = gallery;
  t.scores = scores;
  t.pairs.assign(scores.size(), 1);
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (std::isnan(scores[i])) t.pairs[i] = 0;
  return t;
}

void check_against_oracle(const MetricsReport& r, const OracleMetrics& o) {
  constexpr double kTol = 1e-3 + 1e-12;
  CHECK(std::abs(r.eer - o.eer) <= kTol);
  CHECK(std::abs(r.auc - o.auc) <= kTol);
  CHECK(std::abs(r.f1f - o.f1f) <= kTol);
  CHECK(r.r1 == o.r1);
  CHECK(r.identities == o.identities);
}

}  // namespace

TEST_CASE("cosine matrix basics") {
  const EmbeddingSet s = make_set({"a", "b", "c", "d"}, {{1, 2, 3}, {1, 2, 3}, {-2, 1, 0}, {3, 6, 9}});
  const Tensor m = cosine_matrix(s, s);
  CHECK(m.values()[0 * 4 + 1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(m.values()[0 * 4 + 2]) < 1e-15);
  CHECK(m.values()[0 * 4 + 3] == doctest::Approx(1.0).epsilon(1e-15));
  for (double v : m.values()) CHECK((v >= -1.0 && v <= 1.0));

  const EmbeddingSet z = make_set({"a", "b"}, {{1, 0}, {0, 0}});
  try {
    (void)cosine_matrix(z, z);
    FAIL("zero vector accepted");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("b/1") != std::string::npos);
  }
  CHECK_THROWS_AS(z.validate(), NumericError);
  CHECK_THROWS_AS(cosine_matrix(s, make_set({"a"}, {{1, 0}})), ContractError);
  CHECK_THROWS_AS(make_set({"a", "a"}, {{1, 0}, {0, 1}}).validate(), ContractError);
}

TEST_CASE("per-identity aggregation") {
  SUBCASE("one sample per identity reproduces the raw matrix") {
    const Tensor sc({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    const std::vector<std::string> p{"a", "b"}, g{"a", "b", "c"};
    const IdentityTable t = aggregate_per_identity(sc, p, g);
    CHECK(t.scores == std::vector<double>(sc.values().begin(), sc.values().end()));
  }
  SUBCASE("duplicated sample leaves the mean unchanged") {
    const Tensor one({1, 2}, {0.7, -0.2});
    const Tensor two({2, 2}, {0.7, -0.2, 0.7, -0.2});
    const std::vector<std::string> g{"a", "b"};
    const auto t1 = aggregate_per_identity(one, std::vector<std::string>{"a"}, g);
    const auto t2 = aggregate_per_identity(two, std::vector<std::string>{"a", "a"}, g);
    CHECK(t1.scores == t2.scores);
    CHECK(t2.pairs == std::vector<std::size_t>{2, 2});
  }
  SUBCASE("2 x 2 identities x 2 samples by hand") {
    // probe rows p0 p0 p1 p1 (shuffled), gallery columns g1 g0 g1 g0.
    const std::vector<std::string> p{"p1", "p0", "p1", "p0"}, g{"g1", "g0", "g1", "g0"};
    const std::vector<double> v{0.1, 0.2, 0.3, 0.4,   //
                                0.5, 0.6, 0.7, 0.8,   //
                                -0.1, -0.2, -0.3, -0.4,  //
                                0.9, 0.0, 0.3, 0.6};
    const Tensor sc({4, 4}, v);
    const auto mean = aggregate_per_identity(sc, p, g);
    REQUIRE(mean.probes == std::vector<std::string>{"p0", "p1"});
    REQUIRE(mean.gallery == std::vector<std::string>{"g0", "g1"});
    for (std::size_t pi = 0; pi < 2; ++pi) {
      for (std::size_t gi = 0; gi < 2; ++gi) {
        double sum = 0, mx = -9;
        int n = 0;
        for (std::size_t i = 0; i < 4; ++i)
          for (std::size_t j = 0; j < 4; ++j)
            if (p[i] == mean.probes[pi] && g[j] == mean.gallery[gi]) {
              sum += v[i * 4 + j];
              mx = std::max(mx, v[i * 4 + j]);
              ++n;
            }
        CHECK(mean.at(pi, gi) == doctest::Approx(sum / n).epsilon(1e-15));
        CHECK(aggregate_per_identity(sc, p, g, Aggregation::Max).at(pi, gi) == mx);
      }
    }
  }
  SUBCASE("diagonal exclusion") {
    const Tensor sc({3, 3}, {1, 0.5, 0.2, 0.5, 1, 0.3, 0.2, 0.3, 1});
    const std::vector<std::string> ids{"a", "a", "b"};
    const auto t = aggregate_per_identity(sc, ids, ids, Aggregation::Mean, true);
    CHECK(t.at(0, 0) == 0.5);
    CHECK(std::isnan(t.at(1, 1)));
    CHECK(t.at(0, 1) == doctest::Approx(0.25));
  }
  SUBCASE("errors") {
    const Tensor sc({1, 1}, std::vector<double>{0.0});
    const std::vector<std::string> a{"a"}, empty_label{""}, none;
    CHECK_THROWS_AS(aggregate_per_identity(sc, a, empty_label), ContractError);
    CHECK_THROWS_AS(aggregate_per_identity(sc, a, none), ContractError);
    CHECK_THROWS_AS(aggregation_from_string("median"), ConfigError);
    CHECK(aggregation_from_string(to_string(Aggregation::Max)) == Aggregation::Max);
  }
}

TEST_CASE("ROC scalars on the reference score lists") {
  const std::vector<double> g1{0.9, 0.8}, i1{0.1, 0.2};
  const RocCurve sep = roc_from_scores(g1, i1);
  CHECK(sep.eer() == 0.0);
  CHECK(sep.auc() == 1.0);
  CHECK(sep.f1f() == 0.0);

  const std::vector<double> g2{0.8, 0.4}, i2{0.6, 0.2};
  const RocCurve mixed = roc_from_scores(g2, i2);
  CHECK(std::abs(mixed.eer() - 0.5) <= 1e-3);
  // Trapezoid of the exact polyline against Mann-Whitney 3/4.
  CHECK(std::abs(mixed.auc() - 0.75) <= 1e-3);
  CHECK(mixed.f1f() == doctest::Approx(0.5));

  for (std::size_t i = 1; i < kRocGridPoints; ++i) CHECK(mixed.tmr[i] >= mixed.tmr[i - 1]);
  CHECK_THROWS_AS(roc_from_scores(g1, std::vector<double>{}), ContractError);
}

TEST_CASE("identically distributed scores give chance AUC") {
  Rng rng(41);
  std::vector<double> g(200), im(200);
  for (double& v : g) v = rng.uniform();
  for (double& v : im) v = rng.uniform();
  const RocCurve c = roc_from_scores(g, im);
  CHECK(std::abs(c.auc() - 0.5) < 0.05);
  CHECK(c.auc() >= 0.0);
  CHECK(c.auc() <= 1.0);
}

TEST_CASE("fully tied scores draw the diagonal") {
  const std::vector<double> g{0.3, 0.3}, im{0.3, 0.3, 0.3};
  const RocCurve c = roc_from_scores(g, im);
  for (std::size_t i = 0; i < kRocGridPoints; ++i) CHECK(c.tmr[i] == doctest::Approx(roc_grid_fmr(i)));
  CHECK(c.auc() == doctest::Approx(0.5));
  CHECK(c.eer() == doctest::Approx(0.5));
}

TEST_CASE("perfect separation per identity") {
  const IdentityTable t = table_from({"a", "b", "c"}, {"a", "b", "c"},
                                     {0.9, 0.1, 0.2,  //
                                      0.3, 0.8, 0.1,  //
                                      0.0, 0.4, 0.7});
  std::vector<std::string> warnings;
  const auto curves = roc_per_identity(t, warnings);
  CHECK(warnings.empty());
  const RocCurve avg = average_roc(curves);
  for (std::size_t i = 1; i < kRocGridPoints; ++i) CHECK(avg.tmr[i] == 1.0);
  CHECK(avg.auc() == 1.0);
  CHECK(avg.eer() == 0.0);
  CHECK(rank1(t) == 1.0);
}

TEST_CASE("averaging a separated and a chance identity") {
  SUBCASE("raw curves") {
    const std::vector<double> ga{0.9, 0.8}, ia{0.1, 0.2}, gb{0.8, 0.4}, ib{0.6, 0.2};
    const std::vector<IdentityRoc> curves{{"a", roc_from_scores(ga, ia)}, {"b", roc_from_scores(gb, ib)}};
    CHECK(curves[0].curve.eer() == 0.0);
    CHECK(std::abs(curves[1].curve.eer() - 0.5) <= 1e-3);
    const double e = average_roc(curves).eer();
    CHECK(e > 0.0);
    CHECK(e < 0.5);
    // Threshold sweep: averaged TMR is 0.75 below FMR 0.5, crossing at 0.25.
    CHECK(std::abs(e - 0.25) <= 1e-3);
  }
  SUBCASE("aggregated table") {
    // b's genuine ties every impostor: its curve is the diagonal.
    const IdentityTable t = table_from({"a", "b"}, {"a", "b", "c"}, {0.9, 0.1, 0.2, 0.5, 0.5, 0.5});
    const MetricsReport r = evaluate_table(t);
    CHECK(r.eer > 0.0);
    CHECK(r.eer < 0.5);
    const OracleMetrics o = oracle_from_rows({{0.9, {0.1, 0.2}}, {0.5, {0.5, 0.5}}}, 0.5);
    CHECK(o.eer == doctest::Approx(1.0 / 3.0));
    check_against_oracle(r, o);
  }
  CHECK_THROWS_AS(average_roc(std::vector<IdentityRoc>{}), ContractError);
}

TEST_CASE("rank-1 by enumeration") {
  // Row maxima: a correct, b wrong (c wins), c tied with a (error), d correct.
  const IdentityTable t = table_from({"a", "b", "c", "d"}, {"a", "b", "c", "d"},
                                     {0.9, 0.1, 0.2, 0.3,  //
                                      0.1, 0.5, 0.6, 0.0,  //
                                      0.7, 0.2, 0.7, 0.1,  //
                                      0.2, 0.3, 0.4, 0.8});
  CHECK(rank1(t) == 0.5);

  // Missing genuine cell: the probe is left out of the denominator.
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const IdentityTable gap = table_from({"a", "x"}, {"a", "b"}, {0.9, 0.1, 0.3, 0.2});
  CHECK(rank1(gap) == 1.0);
  const IdentityTable none = table_from({"a"}, {"a", "b"}, {0.5, nan});
  CHECK_THROWS_AS(rank1(none), ContractError);
}

TEST_CASE("identities without genuine or impostor cells are skipped with warnings") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const IdentityTable t = table_from({"a", "b", "x"}, {"a", "b"},
                                     {0.9, 0.1,  //
                                      nan, nan,  //
                                      0.3, 0.2});
  std::vector<std::string> w;
  const auto curves = roc_per_identity(t, w);
  CHECK(curves.size() == 1);
  CHECK(w.size() == 2);
  const IdentityTable empty = table_from({"x"}, {"a", "b"}, {0.3, 0.2});
  CHECK_THROWS_AS(evaluate_table(empty), ContractError);
}

TEST_CASE("pipeline matches the brute-force oracle on small fixtures") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const EmbeddingSet set = oracle_fixture(seed);
    for (bool use_max : {false, true}) {
      EvaluationOptions opts;
      opts.aggregation = use_max ? Aggregation::Max : Aggregation::Mean;
      MetricsReport r;
      try {
        r = evaluate(set, opts);
      } catch (const ContractError&) {
        continue;  // too few multi-sample identities for this draw
      }
      CAPTURE(seed);
      CAPTURE(use_max);
      check_against_oracle(r, oracle(set, nullptr, use_max));
      ++checked;
    }
    // Split the same draw into probe and gallery halves.
    std::vector<std::size_t> pr, ga;
    for (std::size_t i = 0; i < set.size(); ++i) (i % 2 ? ga : pr).push_back(i);
    const EmbeddingSet p = set.subset(pr), g = set.subset(ga);
    MetricsReport r;
    try {
      r = evaluate(p, g);
    } catch (const ContractError&) {
      continue;
    }
    CAPTURE(seed);
    check_against_oracle(r, oracle(p, &g, false));
    ++checked;
  }
  CHECK(checked > 60);
}

TEST_CASE("strictly increasing score transforms leave metrics unchanged") {
  const EmbeddingSet set = random_set(6, 3, 5, 99, 1.2);
  const Tensor sc = cosine_matrix(set, set);
  Tensor warped(sc.shape());
  auto w = warped.mutable_values();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(3.0 * sc.values()[i]) - 7.0;
  for (Aggregation agg : {Aggregation::Mean, Aggregation::Max}) {
    // Per-cell monotone transform on the aggregated table.
    const IdentityTable t = aggregate_per_identity(sc, set.identities, set.identities, agg, true);
    IdentityTable tt = t;
    for (double& v : tt.scores) v = std::atan(5.0 * v) + v * v * v;
    const MetricsReport a = evaluate_table(t), b = evaluate_table(tt);
    CHECK(a.eer == b.eer);
    CHECK(a.auc == b.auc);
    CHECK(a.f1f == b.f1f);
    CHECK(a.r1 == b.r1);
    CHECK(a.roc.tmr == b.roc.tmr);
  }
  // Max commutes with the transform, so it may also be applied to the raw cosines.
  const MetricsReport a =
      evaluate_table(aggregate_per_identity(sc, set.identities, set.identities, Aggregation::Max, true));
  const MetricsReport b =
      evaluate_table(aggregate_per_identity(warped, set.identities, set.identities, Aggregation::Max, true));
  CHECK(a.eer == b.eer);
  CHECK(a.auc == b.auc);
  CHECK(a.f1f == b.f1f);
  CHECK(a.r1 == b.r1);
}

TEST_CASE("scaling every embedding leaves metrics unchanged") {
  const EmbeddingSet set = random_set(6, 3, 8, 5, 1.0);
  EmbeddingSet scaled = set;
  scaled.vectors = set.vectors.clone();
  for (double& v : scaled.vectors.mutable_values()) v *= 3.7;
  const MetricsReport a = evaluate(set), b = evaluate(scaled);
  CHECK(a.eer == b.eer);
  CHECK(a.auc == b.auc);
  CHECK(a.f1f == b.f1f);
  CHECK(a.r1 == b.r1);
}

TEST_CASE("swapping probe and gallery") {
  const EmbeddingSet set = random_set(5, 3, 6, 17, 1.4);
  std::vector<std::size_t> pr, ga;
  for (std::size_t i = 0; i < set.size(); ++i) (i % 3 == 0 ? pr : ga).push_back(i);
  const EmbeddingSet p = set.subset(pr), g = set.subset(ga);
  for (const MetricsReport& r : {evaluate(p, g), evaluate(g, p)}) {
    for (double v : {r.eer, r.auc, r.r1, r.f1f}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(r.genuine_pairs > 0);
    CHECK(r.impostor_pairs > 0);
  }
}

namespace {

void tag(EmbeddingSet& s, const std::function<Subgroup(std::size_t identity)>& f) {
  for (std::size_t i = 0; i < s.size(); ++i) s.subgroups[i] = f(std::stoul(s.identities[i].substr(2)));
}

}  // namespace

TEST_CASE("subgroup curves") {
  SUBCASE("one subgroup equals the global curve") {
    EmbeddingSet s = random_set(6, 2, 6, 3, 0.8);
    tag(s, [](std::size_t) { return Subgroup{"female", "asian"}; });
    const MetricsReport r = evaluate(s);
    REQUIRE(r.subgroups.size() == 1);
    CHECK(r.subgroups.at("female|asian").tmr == r.roc.tmr);
    CHECK(r.subgroup_identities.at("female|asian") == r.identities);
  }
  SUBCASE("separated against random identities") {
    // The first 6 identities sit on their own axis; the other 100 are noise.
    Rng rng(123);
    const std::size_t dim = 64;
    std::vector<std::string> labels;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < 106; ++i) {
      for (int j = 0; j < 2; ++j) {
        std::vector<double> v(dim);
        for (double& x : v) x = rng.normal();
        if (i < 6) {
          for (double& x : v) x *= 0.05;
          v[i] += 1.0;
        }
        labels.push_back("id" + std::to_string(i));
        rows.push_back(v);
      }
    }
    EmbeddingSet s = make_set(labels, rows);
    tag(s, [](std::size_t i) { return i < 6 ? Subgroup{"male", "white"} : Subgroup{"female", "black"}; });
    const MetricsReport r = evaluate(s);
    REQUIRE(r.subgroups.contains("male|white"));
    REQUIRE(r.subgroups.contains("female|black"));
    CHECK(r.subgroups.at("male|white").auc() > 0.99);
    CHECK(std::abs(r.subgroups.at("female|black").auc() - 0.5) < 0.1);
    // Combinations never observed are skipped and reported.
    CHECK(!r.subgroups.contains("male|black"));
    const bool warned = std::ranges::any_of(r.warnings, [](const std::string& w) {
      return w.find("male|black") != std::string::npos && w.find("skipped") != std::string::npos;
    });
    CHECK(warned);
  }
  SUBCASE("single-identity cell is skipped") {
    EmbeddingSet s = random_set(5, 2, 6, 8, 0.8);
    tag(s, [](std::size_t i) { return i == 0 ? Subgroup{"male", "asian"} : Subgroup{"female", "asian"}; });
    const MetricsReport r = evaluate(s);
    CHECK(r.subgroups.size() == 1);
    CHECK(r.subgroups.contains("female|asian"));
    const bool warned = std::ranges::any_of(
        r.warnings, [](const std::string& w) { return w.find("male|asian' has 1 identity") != std::string::npos; });
    CHECK(warned);
  }
  SUBCASE("untagged samples") {
    const EmbeddingSet s = random_set(4, 2, 6, 8);
    const IdentityTable t = aggregate_per_identity(cosine_matrix(s, s), s.identities, s.identities,
                                                   Aggregation::Mean, true);
    std::vector<std::string> w;
    CHECK_THROWS_AS(subgroup_rocs(t, s, w), ContractError);
    const MetricsReport r = evaluate(s);
    CHECK(r.subgroups.empty());
    CHECK(!r.warnings.empty());
  }
}

TEST_CASE("report serialization and embedding files") {
  EmbeddingSet s = random_set(4, 3, 5, 21);
  tag(s, [](std::size_t i) { return synthetic_subgroup(i); });
  s.subgroups[1].reset();
  const MetricsReport r = evaluate(s);
  const auto j = r.to_json();
  for (const char* key : {"eer", "auc", "r1", "f1f", "subgroups", "warnings", "genuine_pairs", "impostor_pairs"}) {
    CHECK(j.contains(key));
  }
  // 4 ids x 3 samples, ordered pairs without self-pairs.
  CHECK(r.genuine_pairs == 4 * 3 * 2);
  CHECK(r.impostor_pairs == 12 * 9);

  const fs::path dir = fs::temp_directory_path() / "edgeear_eval_io";
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (const char* name : {"emb.csv", "emb.bin"}) {
    save_embeddings(dir / name, s);
    const EmbeddingSet back = load_embeddings(dir / name);
    CHECK(back.sample_ids == s.sample_ids);
    CHECK(back.identities == s.identities);
    CHECK(back.subgroups == s.subgroups);
    REQUIRE(back.vectors.shape() == s.vectors.shape());
    const auto a = back.vectors.values(), b = s.vectors.values();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  r.write_roc_csv(dir / "roc.csv");
  std::ifstream in(dir / "roc.csv");
  std::string header, line;
  std::getline(in, header);
  CHECK(header.rfind("fmr,tmr_all", 0) == 0);
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  CHECK(n == kRocGridPoints);

  {
    std::ofstream bad(dir / "bad.csv");
    bad << "sample_id,identity_id,e0,e2\nx,a,1,2\n";
  }
  CHECK_THROWS_AS(load_embeddings(dir / "bad.csv"), LoadError);
  {
    std::ofstream bad(dir / "bad2.csv");
    bad << "sample_id,identity_id,e0\nx,a,nope\n";
  }
  CHECK_THROWS_AS(load_embeddings(dir / "bad2.csv"), LoadError);
  CHECK_THROWS_AS(load_embeddings(dir / "missing.bin"), LoadError);
  fs::remove_all(dir);
}
