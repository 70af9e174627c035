// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "edgeear/complexity.hpp"
#include "edgeear/config_file.hpp"
#include "edgeear/error.hpp"
#include "edgeear/evaluation.hpp"
#include "edgeear/model_config.hpp"
#include "edgeear/rng.hpp"
#include "edgeear/trainer.hpp"

#ifndef EDGEEAR_VERSION
#define EDGEEAR_VERSION "0.0.0"
#endif

namespace edgeear::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Sample> load_data(const std::string& spec, std::uint64_t seed, std::size_t image_size) {
  if (spec.rfind("synth:", 0) == 0) {
    static const std::regex re(R"(synth:(\d+)x(\d+)(?:@(\d+))?)");
    std::smatch m;
    if (!std::regex_match(spec, m, re)) {
      throw ConfigError("data: expected synth:IDSxN or synth:IDSxN@OFFSET, got '" + spec + "'");
    }
    const std::size_t ids = std::stoul(m[1]), per_id = std::stoul(m[2]);
    const std::size_t offset = m[3].matched ? std::stoul(m[3]) : 0;
    if (ids < 2 || per_id == 0) throw ConfigError("data: synthetic set needs >= 2 identities and >= 1 sample each");
    return synth_dataset(ids, per_id, seed, offset, kImageSize);
  }
  if (!fs::is_directory(spec)) throw LoadError("data: '" + spec + "' is neither synth:... nor a directory");
  return load_dir(spec, image_size);
}

namespace {

// Seed streams derived from the user-facing --seed.
enum Stream : std::uint64_t { kModelInit = 0, kTrainData = 5, kEmbedData = 6 };

std::uint64_t stream_seed(std::uint64_t seed, Stream s) { return Rng::derive(seed, s).next_u64(); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(path.string() + ": cannot write");
  out << text;
  if (!out) throw LoadError(path.string() + ": write failed");
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << text;
  } else {
    write_text(out_path, text);
  }
}

void write_manifest(const fs::path& path, const std::string& subcommand, const json& args, const json& seeds,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  const json m{{"tool", "edgeear"},     {"version", EDGEEAR_VERSION}, {"subcommand", subcommand},
               {"args", args},          {"seeds", seeds},             {"inputs", inputs},
               {"outputs", outputs}};
  write_text(path, m.dump(2) + "\n");
}

std::string manifest_for(const std::string& out) { return out + ".manifest.json"; }

// Paths are stored absolute so a manifest replays from any directory.
std::string absolute(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }
std::string absolute_data(const std::string& spec) { return spec.rfind("synth:", 0) == 0 ? spec : absolute(spec); }

// Model section of a config file: a [model] table, or the whole file when it
// has none.
json model_section(const std::string& config_path) {
  if (config_path.empty()) return json::object();
  const json j = load_config_file(config_path);
  if (j.contains("model")) return j.at("model");
  return j;
}

// ---- complexity -----------------------------------------------------------

struct ComplexityCli {
  std::string config, preset, format = "text", out;
  std::size_t input_size = 0, classes = 0;
  std::vector<double> sweep;
};

json resolve_complexity(const ComplexityCli& c) {
  json model = model_section(c.config);
  if (!c.preset.empty()) model["preset"] = c.preset;
  if (c.input_size) model["input_size"] = c.input_size;
  const ModelConfig mc = ModelConfig::from_json(model);
  for (double g : c.sweep)
    if (!(g > 0.0 && g <= 1.0)) throw ConfigError("gamma-sweep: every gamma must lie in (0, 1]");
  return {{"model", mc.to_json()}, {"format", c.format}, {"classes", c.classes}, {"gamma_sweep", c.sweep},
          {"out", absolute(c.out)}};
}

std::vector<std::string> exec_complexity(const json& args, std::ostream& out) {
  const ModelConfig mc = ModelConfig::from_json(args.at("model"));
  const std::string format = args.at("format");
  const auto sweep = args.at("gamma_sweep").get<std::vector<double>>();
  const std::size_t classes = args.at("classes");
  std::string text;
  if (!sweep.empty()) {
    json rows = json::array();
    std::ostringstream t;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-8s %14s %16s %16s\n", "gamma", "params", "madds", "flops");
    t << buf;
    for (double g : sweep) {
      ModelConfig e = ModelConfig::edgeface(g);
      e.input_size = mc.input_size;
      const ComplexityReport r = analyze(e, classes);
      rows.push_back({{"gamma", g}, {"params", r.total_params}, {"madds", r.madds}, {"flops", r.flops}});
      std::snprintf(buf, sizeof buf, "%-8.3g %14llu %16llu %16llu\n", g,
                    static_cast<unsigned long long>(r.total_params), static_cast<unsigned long long>(r.madds),
                    static_cast<unsigned long long>(r.flops));
      t << buf;
    }
    text = format == "json" ? json{{"input_size", mc.input_size}, {"sweep", rows}}.dump(2) + "\n" : t.str();
  } else {
    const ComplexityReport r = analyze(mc, classes);
    text = format == "json" ? r.to_json().dump(2) + "\n" : r.to_text();
  }
  const std::string out_path = args.at("out");
  emit(text, out_path, out);
  return out_path.empty() ? std::vector<std::string>{} : std::vector<std::string>{out_path};
}

// ---- train ----------------------------------------------------------------

struct TrainCli {
  std::string config, data, out, preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps, epochs;
};

json resolve_train(const TrainCli& c) {
  json file = c.config.empty() ? json::object() : load_config_file(c.config);
  for (const auto& [key, _] : file.items()) {
    if (key != "model" && key != "train" && key != "loss" && key != "augmentation") {
      throw ConfigError(key + ": unknown table (model, train, loss, augmentation)");
    }
  }
  json model = file.value("model", json::object());
  if (!c.preset.empty()) model["preset"] = c.preset;
  json train = file.value("train", json::object());
  if (file.contains("loss")) train["loss"] = file["loss"];
  if (file.contains("augmentation")) train["augmentation"] = file["augmentation"];
  if (c.seed) train["seed"] = *c.seed;
  if (c.steps) train["max_steps"] = *c.steps;
  if (c.epochs) train["max_epochs"] = *c.epochs;
  const ModelConfig mc = ModelConfig::from_json(model);
  const TrainConfig tc = TrainConfig::from_json(train);
  return {{"model", mc.to_json()}, {"train", tc.to_json()}, {"data", absolute_data(c.data)}, {"out", absolute(c.out)}};
}

std::vector<std::string> exec_train(const json& args, std::ostream& out, json& seeds) {
  const ModelConfig mc = ModelConfig::from_json(args.at("model"));
  const TrainConfig tc = TrainConfig::from_json(args.at("train"));
  const fs::path dir = args.at("out").get<std::string>();
  seeds = {{"train", tc.seed},
           {"model_init", stream_seed(tc.seed, kModelInit)},
           {"data", stream_seed(tc.seed, kTrainData)}};
  const auto samples = load_data(args.at("data"), stream_seed(tc.seed, kTrainData), mc.input_size);
  EdgeEarModel model(mc, stream_seed(tc.seed, kModelInit));
  const TrainResult r = fit(model, samples, tc);
  save_checkpoint(dir, model, tc, r);
  char buf[200];
  std::snprintf(buf, sizeof buf, "trained %zu steps over %zu epochs: loss %.6f -> %.6f, best epoch %zu%s\n",
                r.steps.size(), r.epochs.size(), r.initial_loss(), r.final_loss(), r.best_epoch,
                r.stopped_early ? " (early stop)" : "");
  out << buf;
  std::vector<std::string> files;
  for (const char* f : {"config.json", "weights.bin", "history.csv", "steps.csv"}) files.push_back((dir / f).string());
  return files;
}

// ---- embed ----------------------------------------------------------------

struct EmbedCli {
  std::string weights, data, out;
  std::uint64_t seed = 0;
  std::size_t batch = 32;
};

json resolve_embed(const EmbedCli& c) {
  if (c.batch == 0) throw ConfigError("batch: must be positive");
  return {{"weights", absolute(c.weights)},
          {"data", absolute_data(c.data)},
          {"out", absolute(c.out)},
          {"seed", c.seed},
          {"batch_size", c.batch}};
}

std::vector<std::string> exec_embed(const json& args, std::ostream& out, json& seeds) {
  const std::uint64_t seed = args.at("seed");
  seeds = {{"seed", seed}, {"data", stream_seed(seed, kEmbedData)}};
  const EdgeEarModel model = load_checkpoint(args.at("weights").get<std::string>());
  const auto samples = load_data(args.at("data"), stream_seed(seed, kEmbedData), model.config().input_size);
  const EmbeddingSet set = embed_samples(model, samples, args.at("batch_size"));
  const std::string path = args.at("out");
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  save_embeddings(path, set);
  out << "embedded " << set.size() << " samples of " << set.dim() << " dimensions\n";
  return {path};
}

// ---- eval -----------------------------------------------------------------

struct EvalCli {
  std::string embeddings, gallery, out, aggregation = "mean", metadata, roc_csv;
  bool no_subgroups = false;
  std::uint64_t seed = 0;
};

json resolve_eval(const EvalCli& c) {
  (void)aggregation_from_string(c.aggregation);
  return {{"embeddings", absolute(c.embeddings)},
          {"gallery", absolute(c.gallery)},
          {"out", absolute(c.out)},
          {"aggregation", c.aggregation},
          {"metadata", absolute(c.metadata)},
          {"subgroups", !c.no_subgroups},
          {"roc_csv", absolute(c.roc_csv)},
          {"seed", c.seed}};
}

void apply_metadata(EmbeddingSet& set, const std::map<std::string, Subgroup>& meta) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (auto it = meta.find(set.identities[i]); it != meta.end()) set.subgroups[i] = it->second;
  }
}

std::vector<std::string> exec_eval(const json& args, std::ostream& out, json& seeds) {
  seeds = {{"seed", args.at("seed")}};
  EvaluationOptions opts;
  opts.aggregation = aggregation_from_string(args.at("aggregation"));
  opts.subgroups = args.at("subgroups");
  EmbeddingSet probes = load_embeddings(args.at("embeddings").get<std::string>());
  std::optional<EmbeddingSet> gallery;
  const std::string gallery_path = args.at("gallery");
  if (!gallery_path.empty()) gallery = load_embeddings(gallery_path);
  const std::string meta_path = args.at("metadata");
  if (!meta_path.empty()) {
    const auto meta = read_metadata(meta_path);
    apply_metadata(probes, meta);
    if (gallery) apply_metadata(*gallery, meta);
  }
  const MetricsReport r = gallery ? evaluate(probes, *gallery, opts) : evaluate(probes, opts);
  std::vector<std::string> files;
  const std::string path = args.at("out");
  const std::string text = r.to_json().dump(2) + "\n";
  emit(text, path, out);
  if (!path.empty()) files.push_back(path);
  const std::string roc = args.at("roc_csv");
  if (!roc.empty()) {
    r.write_roc_csv(roc);
    files.push_back(roc);
  }
  if (!path.empty()) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "eer %.4f  auc %.4f  r1 %.4f  f1f %.4f\n", r.eer, r.auc, r.r1, r.f1f);
    out << buf;
  }
  return files;
}

// ---- dispatch -------------------------------------------------------------

std::vector<std::string> execute(const std::string& cmd, const json& args, std::ostream& out, json& seeds,
                                 std::vector<std::string>& inputs) {
  if (cmd == "complexity") {
    seeds = json::object();
    return exec_complexity(args, out);
  }
  if (cmd == "train") {
    inputs = {args.at("data")};
    return exec_train(args, out, seeds);
  }
  if (cmd == "embed") {
    inputs = {args.at("weights"), args.at("data")};
    return exec_embed(args, out, seeds);
  }
  if (cmd == "eval") {
    inputs = {args.at("embeddings")};
    for (const char* k : {"gallery", "metadata"})
      if (!args.at(k).get<std::string>().empty()) inputs.push_back(args.at(k));
    return exec_eval(args, out, seeds);
  }
  throw ConfigError("manifest: unknown subcommand '" + cmd + "'");
}

std::string manifest_path(const std::string& cmd, const json& args) {
  const std::string o = args.at("out");
  if (o.empty()) return "";
  return cmd == "train" ? (fs::path(o) / "manifest.json").string() : manifest_for(o);
}

void run_and_record(const std::string& cmd, const json& args, std::ostream& out) {
  json seeds;
  std::vector<std::string> inputs;
  const auto outputs = execute(cmd, args, out, seeds, inputs);
  const std::string m = manifest_path(cmd, args);
  if (!m.empty()) write_manifest(m, cmd, args, seeds, inputs, outputs);
}

int replay(const std::string& manifest_file, const std::string& into, std::ostream& out, std::ostream& err) {
  json m;
  try {
    m = json::parse(read_bytes(manifest_file));
  } catch (const json::parse_error& e) {
    throw LoadError(manifest_file + ": " + e.what());
  }
  if (!m.contains("subcommand") || !m.contains("args")) throw LoadError(manifest_file + ": not a run manifest");
  const std::string cmd = m.at("subcommand");
  json args = m.at("args");
  const auto original = m.value("outputs", std::vector<std::string>{});
  if (into.empty()) {
    run_and_record(cmd, args, out);
    return kOk;
  }
  auto redirect = [&](const char* key) {
    const std::string v = args.value(key, std::string{});
    if (!v.empty()) args[key] = (fs::path(into) / fs::path(v).filename()).string();
  };
  redirect("out");
  if (cmd == "eval") redirect("roc_csv");
  if (args.value("out", std::string{}).empty()) throw ConfigError("replay --into: the run wrote to stdout only");
  json seeds;
  std::vector<std::string> inputs;
  const auto produced = execute(cmd, args, out, seeds, inputs);
  write_manifest(manifest_path(cmd, args), cmd, args, seeds, inputs, produced);
  if (produced.size() != original.size()) {
    err << "replay: produced " << produced.size() << " outputs, manifest lists " << original.size() << "\n";
    return kReplayMismatch;
  }
  bool same = true;
  for (std::size_t i = 0; i < produced.size(); ++i) {
    const bool eq = read_bytes(original[i]) == read_bytes(produced[i]);
    out << (eq ? "identical  " : "DIFFERENT  ") << produced[i] << "\n";
    same = same && eq;
  }
  return same ? kOk : kReplayMismatch;
}

void setup_logging(const std::string& level) {
  auto logger = spdlog::get("edgeear");
  if (!logger) {
    logger = std::make_shared<spdlog::logger>("edgeear", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    spdlog::register_logger(logger);
  }
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int run(const std::vector<std::string>& raw, std::ostream& out, std::ostream& err) {
  CLI::App app{"EdgeEar ear-recognition toolkit: complexity audit, training, embedding and evaluation", "edgeear"};
  app.require_subcommand(1);
  app.set_version_flag("--version", EDGEEAR_VERSION);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  ComplexityCli cx;
  auto* c_cmd = app.add_subcommand("complexity", "Parameter, MAdds and FLOPs audit of a model config");
  c_cmd->add_option("--config", cx.config, "TOML or JSON file with a [model] table");
  c_cmd->add_option("--preset", cx.preset, "edgeear, tiny or edgeface-<gamma>");
  c_cmd->add_option("--input-size", cx.input_size, "Input resolution (square)");
  c_cmd->add_option("--format", cx.format, "json or text")->check(CLI::IsMember({"json", "text"}));
  c_cmd->add_option("--classes", cx.classes, "Also report a classifier head over this many classes");
  c_cmd->add_option("--gamma-sweep", cx.sweep, "Non-selective rank ratios to tabulate")->delimiter(',');
  c_cmd->add_option("--out", cx.out, "Write the report here instead of stdout");

  TrainCli tr;
  auto* t_cmd = app.add_subcommand("train", "Train a backbone and write a checkpoint directory");
  t_cmd->add_option("--config", tr.config, "TOML or JSON with [model], [train], [loss], [augmentation]");
  t_cmd->add_option("--data", tr.data, "Image directory or synth:IDSxN[@OFFSET]")->required();
  t_cmd->add_option("--out", tr.out, "Checkpoint directory")->required();
  t_cmd->add_option("--preset", tr.preset, "Model preset");
  t_cmd->add_option("--seed", tr.seed, "Seed for initialization, data order and augmentation");
  t_cmd->add_option("--steps", tr.steps, "Cap on optimizer steps");
  t_cmd->add_option("--epochs", tr.epochs, "Maximum epochs");

  EmbedCli em;
  auto* e_cmd = app.add_subcommand("embed", "Embed images with a trained checkpoint");
  e_cmd->add_option("--weights", em.weights, "Checkpoint directory written by train")->required();
  e_cmd->add_option("--data", em.data, "Image directory or synth:IDSxN[@OFFSET]")->required();
  e_cmd->add_option("--out", em.out, "Embedding file (.csv or blob)")->required();
  e_cmd->add_option("--seed", em.seed, "Seed for synthetic data");
  e_cmd->add_option("--batch", em.batch, "Images per forward pass");

  EvalCli ev;
  auto* v_cmd = app.add_subcommand("eval", "Verification and identification metrics");
  v_cmd->add_option("--embeddings", ev.embeddings, "Probe embeddings (all pairs without --gallery)")->required();
  v_cmd->add_option("--gallery", ev.gallery, "Gallery embeddings");
  v_cmd->add_option("--out", ev.out, "Metrics JSON path (stdout when omitted)");
  v_cmd->add_option("--aggregation", ev.aggregation, "mean or max")->check(CLI::IsMember({"mean", "max"}));
  v_cmd->add_option("--subgroups", ev.metadata, "metadata.csv mapping identities to gender and ethnicity");
  v_cmd->add_flag("--no-subgroups", ev.no_subgroups, "Skip subgroup curves");
  v_cmd->add_option("--roc-csv", ev.roc_csv, "Also write the averaged ROC curves");
  v_cmd->add_option("--seed", ev.seed, "Recorded in the manifest");

  std::string manifest, into;
  auto* r_cmd = app.add_subcommand("replay", "Re-run a command from its manifest");
  r_cmd->add_option("manifest", manifest, "Manifest written by an earlier run")->required();
  r_cmd->add_option("--into", into, "Write outputs here and byte-compare them with the originals");

  std::vector<std::string> args(raw.rbegin(), raw.rend());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << EDGEEAR_VERSION << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "edgeear: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    setup_logging(log_level);
    if (const char* env = std::getenv("EDGEEAR_THREADS")) {
      char* end = nullptr;
      const long n = std::strtol(env, &end, 10);
      if (*env == '\0' || *end != '\0' || n < 1) throw ConfigError("EDGEEAR_THREADS: expected a positive integer");
    }
    if (c_cmd->parsed()) {
      run_and_record("complexity", resolve_complexity(cx), out);
    } else if (t_cmd->parsed()) {
      run_and_record("train", resolve_train(tr), out);
    } else if (e_cmd->parsed()) {
      run_and_record("embed", resolve_embed(em), out);
    } else if (v_cmd->parsed()) {
      run_and_record("eval", resolve_eval(ev), out);
    } else if (r_cmd->parsed()) {
      return replay(manifest, into, out, err);
    }
    return kOk;
  } catch (const NumericError& e) {
    err << "edgeear: numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const Error& e) {
    err << "edgeear: " << e.what() << "\n";
    return kConfigError;
  } catch (const json::exception& e) {
    err << "edgeear: malformed manifest or config: " << e.what() << "\n";
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "edgeear: " << e.what() << "\n";
    return kConfigError;
  }
}

}  // namespace edgeear::cli
