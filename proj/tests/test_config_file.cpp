// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "edgeear/config_file.hpp"
#include "edgeear/error.hpp"
#include "edgeear/model_config.hpp"
#include "edgeear/trainer.hpp"

using namespace edgeear;

TEST_CASE("toml subset") {
  const auto j = parse_toml(R"(# run settings
name = "tiny run"   # trailing comment
seed = 42
[model]
preset = 'tiny'
global_gamma = 0.65
stage_dims = [8, 16,
              24, 32]   # continued
selective = false

[train]
lr = 3e-3
max_steps = 1_000
neg = -2
big = +1.5E2
flag = true
path = "a\"b\\c"
empty = []
)");
  CHECK(j["name"] == "tiny run");
  CHECK(j["seed"] == 42);
  CHECK(j["model"]["preset"] == "tiny");
  CHECK(j["model"]["global_gamma"] == 0.65);
  CHECK(j["model"]["stage_dims"] == nlohmann::json::array({8, 16, 24, 32}));
  CHECK(j["model"]["selective"] == false);
  CHECK(j["train"]["lr"] == 3e-3);
  CHECK(j["train"]["max_steps"] == 1000);
  CHECK(j["train"]["max_steps"].is_number_integer());
  CHECK(j["train"]["neg"] == -2);
  CHECK(j["train"]["big"] == 150.0);
  CHECK(j["train"]["flag"] == true);
  CHECK(j["train"]["path"] == "a\"b\\c");
  CHECK(j["train"]["empty"].empty());
}

TEST_CASE("toml errors carry the line") {
  auto fails_at = [](const std::string& text, const std::string& where) {
    try {
      (void)parse_toml(text, "cfg.toml");
      FAIL("accepted: " << text);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(where) != std::string::npos);
    }
  };
  fails_at("a = 1\nb = \n", "cfg.toml:2");
  fails_at("a = 1\na = 2\n", "duplicate key 'a'");
  fails_at("[x]\n[x]\n", "duplicate table");
  fails_at("[x.y]\n", "nested tables");
  fails_at("a.b = 1\n", "dotted keys");
  fails_at("a = \"open\n", "unterminated string");
  fails_at("a = [1, 2\n", "unterminated array");
  fails_at("a = 1 2\n", "unexpected text");
  fails_at("a = 01\n", "leading zeros");
  fails_at("a = 1__0\n", "bad number");
  fails_at("a = {b = 1}\n", "inline tables");
  fails_at("a = yes\n", "bad value");
}

TEST_CASE("config files feed the typed configs") {
  const auto dir = std::filesystem::temp_directory_path() / "edgeear_cfg";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "run.toml") << "[model]\npreset = \"tiny\"\n[train]\nbatch_size = 8\nlr = 0.01\n";
    std::ofstream(dir / "run.json") << R"({"model": {"preset": "tiny"}, "train": {"batch_size": 8, "lr": 0.01}})";
    std::ofstream(dir / "bad.json") << "{";
  }
  const auto a = load_config_file(dir / "run.toml"), b = load_config_file(dir / "run.json");
  CHECK(a == b);
  CHECK(ModelConfig::from_json(a["model"]).to_json() == ModelConfig::tiny().to_json());
  CHECK(TrainConfig::from_json(a["train"]).batch_size == 8);
  CHECK_THROWS_AS(load_config_file(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_config_file(dir / "nope.toml"), LoadError);
  std::filesystem::remove_all(dir);
}
