// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <numeric>

#include "edgeear/backbone.hpp"
#include "edgeear/complexity.hpp"
#include "edgeear/error.hpp"

using namespace edgeear;

namespace {

LayerGraph single_projection(std::size_t in, std::size_t out, std::optional<double> gamma, std::size_t hw = 1) {
  GraphBuilder g({in, hw, hw});
  g.projection("fc", -1, out, gamma);
  return std::move(g).build();
}

}  // namespace

TEST_CASE("count_params on single projections") {
  CHECK(count_params(single_projection(512, 512, std::nullopt)) == 262'656);
  CHECK(count_params(single_projection(192, 576, 0.5)) == 74'304);
}

TEST_CASE("conv MAdds follow k^2 (C/g) O Ho Wo") {
  GraphBuilder g({3, 64, 64});
  g.conv2d("conv", -1, 32, 3, 1, 1, 1);
  const LayerGraph graph = std::move(g).build();
  CHECK(graph.nodes.back().out == FeatureShape{32, 64, 64});
  CHECK(count_madds(graph) == 3'538'944);

  GraphBuilder dw({16, 8, 8});
  dw.conv2d("dw", -1, 16, 3, 2, 1, 16);
  CHECK(count_madds(std::move(dw).build()) == 9ull * 16 * 4 * 4);
}

TEST_CASE("pointwise conv and per-position linear cost the same") {
  const std::size_t c = 24, o = 40, hw = 7;
  GraphBuilder g({c, hw, hw});
  g.conv2d("pw", -1, o, 1, 1, 0, 1);
  const LayerGraph conv = std::move(g).build();
  const LayerGraph lin = single_projection(c, o, std::nullopt, hw);
  CHECK(count_madds(conv) == count_madds(lin));
  CHECK(count_params(conv) == count_params(lin));
}

TEST_CASE("LoRaLin MAdds are (rN + Mr) S") {
  const LayerGraph g = single_projection(192, 576, 0.5, 4);
  CHECK(count_madds(g) == (96ull * 192 + 576ull * 96) * 16);
}

TEST_CASE("malformed graphs are rejected") {
  LayerGraph g = single_projection(8, 8, std::nullopt);
  SUBCASE("forward reference") {
    g.nodes[0].inputs = {3};
    CHECK_THROWS_AS(g.validate(), AnalysisError);
  }
  SUBCASE("output inconsistent with conv geometry") {
    GraphBuilder b({3, 16, 16});
    b.conv2d("c", -1, 8, 3, 1, 1, 1);
    LayerGraph bad = std::move(b).build();
    bad.nodes[0].out.height = 15;
    CHECK_THROWS_AS(bad.validate(), AnalysisError);
  }
  SUBCASE("unknown kind in JSON") {
    auto j = g.to_json();
    j["nodes"][0]["kind"] = "deformable_conv";
    CHECK_THROWS_AS(LayerGraph::from_json(j), AnalysisError);
  }
  SUBCASE("loralin without gamma") {
    g.nodes[0].kind = NodeKind::LoRaLin;
    CHECK_THROWS_AS(count_params(g), AnalysisError);
  }
}

TEST_CASE("default EdgeEar graph budget") {
  const ComplexityReport r = analyze(ModelConfig::edgeear(), 1474);
  MESSAGE("params=" << r.total_params << " madds=" << r.madds << " flops=" << r.flops);
  CHECK(std::abs(static_cast<double>(r.total_params) / 1.98e6 - 1.0) <= 0.05);
  CHECK(std::abs(static_cast<double>(r.madds) / 129.03e6 - 1.0) <= 0.10);
  CHECK(r.flops == 2 * r.madds + r.elementwise_flops);
  CHECK(static_cast<double>(r.elementwise_flops) < 0.02 * static_cast<double>(r.flops));
  CHECK(r.classifier_params == 1474ull * 512);
  CHECK(r.classifier_madds == 1474ull * 512);
}

TEST_CASE("report totals are the sum of per-layer rows") {
  const ComplexityReport r = analyze(ModelConfig::edgeear());
  std::uint64_t p = 0, m = 0, f = 0;
  for (const auto& l : r.layers) {
    p += l.params;
    m += l.madds;
    f += l.flops();
  }
  CHECK(p == r.total_params);
  CHECK(m == r.madds);
  CHECK(f == r.flops);
  CHECK(r.to_json()["layers"].size() == r.layers.size());
}

TEST_CASE("removing a node removes exactly its MAdds") {
  const LayerGraph g = describe_model(ModelConfig::edgeear());
  const std::uint64_t total = count_madds(g);
  for (std::size_t i : {0ul, 5ul, g.nodes.size() / 2, g.nodes.size() - 1}) {
    LayerGraph cut = g;
    const std::uint64_t own = node_cost(cut.nodes[i]).madds;
    cut.nodes.erase(cut.nodes.begin() + static_cast<std::ptrdiff_t>(i));
    CHECK(count_madds(cut) + own == total);
  }
}

TEST_CASE("static count equals the instantiated model's parameter enumeration") {
  for (const ModelConfig& c : {ModelConfig::edgeear(), ModelConfig::tiny(), ModelConfig::edgeface(0.5),
                               ModelConfig::edgeface(0.7)}) {
    EdgeEarModel model(c, 1);
    CHECK(count_params(describe_model(c)) == model.parameter_count());
  }
}

TEST_CASE("graph JSON round trip") {
  const LayerGraph g = describe_model(ModelConfig::edgeear());
  const LayerGraph back = LayerGraph::from_json(g.to_json());
  CHECK(back.to_json() == g.to_json());
  CHECK(count_params(back) == count_params(g));
  CHECK(count_madds(back) == count_madds(g));
}

TEST_CASE("MAdds scale with input resolution") {
  ModelConfig c = ModelConfig::edgeear();
  const std::uint64_t at128 = count_madds(describe_model(c));
  c.input_size = 256;
  const LayerGraph big = describe_model(c);
  // Every spatial term scales with the position count; only the head after
  // global pooling is resolution independent.
  const std::uint64_t head = node_cost(big.nodes.back()).madds;
  CHECK(head == 192ull * 512);
  CHECK(count_madds(big) - head == 4 * (at128 - head));
  CHECK(count_params(big) == count_params(describe_model(ModelConfig::edgeear())));
}

TEST_CASE("non-selective sweep ordering and the 2M crossing") {
  const std::uint64_t p5 = count_params(describe_model(ModelConfig::edgeface(0.5)));
  const std::uint64_t p6 = count_params(describe_model(ModelConfig::edgeface(0.6)));
  const std::uint64_t p7 = count_params(describe_model(ModelConfig::edgeface(0.7)));
  MESSAGE("gamma 0.5/0.6/0.7 -> " << p5 << " / " << p6 << " / " << p7);
  CHECK(p5 < p6);
  CHECK(p6 < p7);
  CHECK(p6 < 2'000'000);
  CHECK(std::abs(static_cast<double>(p7) / 2e6 - 1.0) < 0.05);
  const double g = gamma_for_budget(ModelConfig::edgeface(0.5), 2'000'000);
  CHECK(g >= 0.6);
  CHECK(g <= 0.7);
}

TEST_CASE("gamma_for_budget edge cases") {
  const ModelConfig t = ModelConfig::edgeface(0.5);
  ModelConfig full = t;
  full.global_gamma = 1.0;
  CHECK(gamma_for_budget(t, count_params(describe_model(full))) == 1.0);
  ModelConfig minimal = t;
  minimal.global_gamma = 0.01;
  CHECK_THROWS_AS(gamma_for_budget(t, count_params(describe_model(minimal)) - 1), AnalysisError);
  CHECK(gamma_for_budget(t, count_params(describe_model(minimal))) == 0.01);
}

TEST_CASE("text report mentions the totals") {
  const ComplexityReport r = analyze(ModelConfig::tiny(), 10);
  const std::string text = r.to_text();
  CHECK(text.find(std::to_string(r.total_params)) != std::string::npos);
  CHECK(text.find("classifier") != std::string::npos);
}
