// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "edgeear/evaluation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), {"--log-level", "off"});
  std::ostringstream out, err;
  const int code = edgeear::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct Workdir {
  fs::path path;
  explicit Workdir(const std::string& name) : path(fs::temp_directory_path() / ("edgeear_cli_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Workdir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

json read_json(const std::string& path) {
  std::ifstream in(path);
  return json::parse(in);
}

}  // namespace

TEST_CASE("complexity report schema") {
  const Result r = invoke({"complexity", "--format", "json"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  for (const char* k : {"params", "madds", "flops", "input_size", "layers"}) CHECK(j.contains(k));
  CHECK(j["input_size"] == 128);

  const Result text = invoke({"complexity", "--preset", "tiny", "--input-size", "64"});
  CHECK(text.code == 0);
  CHECK(text.out.find("params") != std::string::npos);
}

TEST_CASE("gamma sweep rows grow with gamma") {
  const Result r = invoke({"complexity", "--gamma-sweep", "0.5,0.6,0.7", "--format", "json"});
  REQUIRE(r.code == 0);
  const json rows = json::parse(r.out)["sweep"];
  REQUIRE(rows.size() == 3);
  CHECK(rows[0]["params"] < rows[1]["params"]);
  CHECK(rows[1]["params"] < rows[2]["params"]);
  const Result t = invoke({"complexity", "--gamma-sweep", "0.5,0.6,0.7"});
  std::size_t lines = 0;
  for (char c : t.out) lines += c == '\n';
  CHECK(lines == 4);
}

TEST_CASE("config and flag errors exit 2") {
  Workdir w("errors");
  write(w / "bad.toml", "[model]\nstage_dims = [8, 16, 24, 0]\n");
  Result r = invoke({"complexity", "--config", w / "bad.toml"});
  CHECK(r.code == 2);
  CHECK(r.err.find("model.stage_dims") != std::string::npos);

  write(w / "typo.toml", "[model]\nstage_dimz = [8, 16, 24, 32]\n");
  r = invoke({"complexity", "--config", w / "typo.toml"});
  CHECK(r.code == 2);
  CHECK(r.err.find("stage_dimz") != std::string::npos);

  CHECK(invoke({"complexity", "--frobnicate"}).code == 2);
  CHECK(invoke({"eval", "--embeddings", w / "missing.csv"}).code == 2);
  CHECK(invoke({"train", "--data", "synth:3", "--out", w / "x"}).code == 2);
  CHECK(invoke({"eval", "--embeddings", w / "x.csv", "--aggregation", "median"}).code == 2);
  CHECK(invoke({}).code == 2);

  setenv("EDGEEAR_THREADS", "lots", 1);
  CHECK(invoke({"complexity"}).code == 2);
  unsetenv("EDGEEAR_THREADS");
}

TEST_CASE("help lists every flag") {
  const std::map<std::string, std::vector<std::string>> flags{
      {"complexity", {"--config", "--preset", "--input-size", "--format", "--classes", "--gamma-sweep", "--out"}},
      {"train", {"--config", "--data", "--out", "--preset", "--seed", "--steps", "--epochs"}},
      {"embed", {"--weights", "--data", "--out", "--seed", "--batch"}},
      {"eval",
       {"--embeddings", "--gallery", "--out", "--aggregation", "--subgroups", "--no-subgroups", "--roc-csv",
        "--seed"}},
      {"replay", {"--into"}}};
  for (const auto& [cmd, names] : flags) {
    const Result r = invoke({cmd, "--help"});
    CHECK(r.code == 0);
    for (const auto& f : names) {
      CAPTURE(cmd);
      CAPTURE(f);
      CHECK(r.out.find(f) != std::string::npos);
    }
  }
}

TEST_CASE("numeric failures exit 3") {
  Workdir w("numeric");
  write(w / "zero.csv", "sample_id,identity_id,e0,e1\na/0,a,1,0\na/1,a,0.9,0.1\nb/0,b,0,0\nb/1,b,0,1\n");
  const Result r = invoke({"eval", "--embeddings", w / "zero.csv"});
  CHECK(r.code == 3);
  CHECK(r.err.find("b/0") != std::string::npos);
}

TEST_CASE("eval on a separated fixture") {
  Workdir w("separated");
  std::ostringstream csv;
  csv << "sample_id,identity_id,e0,e1,e2,e3\n";
  for (int id = 0; id < 4; ++id)
    for (int s = 0; s < 2; ++s) {
      csv << "id" << id << "/" << s << ",id" << id;
      for (int k = 0; k < 4; ++k) csv << "," << (k == id ? 1.0 : 0.01 * (s + 1));
      csv << "\n";
    }
  write(w / "emb.csv", csv.str());
  write(w / "meta.csv", "id,gender,ethnicity\nid0,female,asian\nid1,female,asian\nid2,male,white\nid3,male,white\n");
  const Result r = invoke({"eval", "--embeddings", w / "emb.csv", "--out", w / "m.json", "--subgroups",
                            w / "meta.csv", "--roc-csv", w / "roc.csv"});
  REQUIRE(r.code == 0);
  const json m = read_json(w / "m.json");
  CHECK(m["eer"] == 0.0);
  CHECK(m["auc"] == 1.0);
  CHECK(m["r1"] == 1.0);
  CHECK(m["subgroups"].contains("female|asian"));
  CHECK(m["subgroups"].contains("male|white"));
  CHECK(fs::exists(w / "m.json.manifest.json"));
  std::ifstream roc(w / "roc.csv");
  std::string header;
  std::getline(roc, header);
  CHECK(header == "fmr,tmr_all,tmr_female|asian,tmr_male|white");

  // Probe/gallery mode on the same file is accepted too.
  CHECK(invoke({"eval", "--embeddings", w / "emb.csv", "--gallery", w / "emb.csv"}).code == 0);
}

TEST_CASE("train, embed, eval and replay") {
  Workdir w("pipeline");
  write(w / "run.toml",
        "[model]\npreset = \"tiny\"\ninput_size = 64\n\n[train]\nbatch_size = 8\nlr = 0.003\n\n"
        "[augmentation]\nrotation_degrees = 10.0\n");
  Result r = invoke({"train", "--config", w / "run.toml", "--data", "synth:4x5", "--out", w / "ckpt", "--steps",
                      "12", "--seed", "4"});
  REQUIRE(r.code == 0);
  for (const char* f : {"config.json", "weights.bin", "history.csv", "steps.csv", "manifest.json"})
    CHECK(fs::exists(fs::path(w / "ckpt") / f));
  const json tm = read_json((fs::path(w / "ckpt") / "manifest.json").string());
  CHECK(tm["subcommand"] == "train");
  CHECK(tm["args"]["train"]["seed"] == 4);
  CHECK(tm["args"]["train"]["max_steps"] == 12);
  CHECK(tm["args"]["train"]["augmentation"]["rotation_degrees"] == 10.0);
  CHECK(tm["seeds"].contains("model_init"));

  r = invoke({"embed", "--weights", w / "ckpt", "--data", "synth:4x3@10", "--out", w / "emb.bin"});
  REQUIRE(r.code == 0);
  r = invoke({"eval", "--embeddings", w / "emb.bin", "--out", w / "metrics.json"});
  REQUIRE(r.code == 0);
  const json m = read_json(w / "metrics.json");
  for (const char* k : {"eer", "auc", "r1", "f1f"}) {
    CHECK(m[k].get<double>() >= 0.0);
    CHECK(m[k].get<double>() <= 1.0);
  }
  CHECK(m.contains("subgroups"));

  for (const std::string& manifest :
       {(fs::path(w / "ckpt") / "manifest.json").string(), w / "emb.bin.manifest.json", w / "metrics.json.manifest.json"}) {
    CAPTURE(manifest);
    const Result rr = invoke({"replay", manifest, "--into", w / "replayed"});
    CHECK(rr.code == 0);
    CHECK(rr.out.find("DIFFERENT") == std::string::npos);
    CHECK(rr.out.find("identical") != std::string::npos);
  }

  // A tampered output is caught.
  write(w / "metrics.json", "{}\n");
  CHECK(invoke({"replay", w / "metrics.json.manifest.json", "--into", w / "again"}).code == 1);
  CHECK(invoke({"replay", w / "nope.json"}).code == 2);
}
