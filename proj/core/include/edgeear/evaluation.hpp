// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgeear/data.hpp"
#include "edgeear/tensor.hpp"

namespace edgeear {

// Labelled embeddings, one row per sample.
struct EmbeddingSet {
  std::vector<std::string> sample_ids;
  std::vector<std::string> identities;
  std::vector<std::optional<Subgroup>> subgroups;
  Tensor vectors;  // [N x D]

  std::size_t size() const { return sample_ids.size(); }
  std::size_t dim() const { return vectors.rank() == 2 ? vectors.size(1) : 0; }

  // Consistent lengths, labelled samples, at least two identities, finite
  // entries. Throws ContractError; zero vectors raise NumericError naming the
  // sample.
  void validate() const;
  EmbeddingSet subset(std::span<const std::size_t> rows) const;
};

// Cosine similarities [Na x Nb].
Tensor cosine_matrix(const EmbeddingSet& a, const EmbeddingSet& b);

// Mean cosine over same-identity sample pairs (self-pairs excluded) minus the
// mean over different-identity pairs. Throws ContractError when either set of
// pairs is empty.
double cosine_separation(const EmbeddingSet& set);

enum class Aggregation { Mean, Max };
std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

// Identity-pair score table: rows are probe identities, columns gallery
// identities, both sorted. Cells without any sample pair hold NaN.
struct IdentityTable {
  std::vector<std::string> probes;
  std::vector<std::string> gallery;
  std::vector<double> scores;       // probes x gallery, row-major
  std::vector<std::size_t> pairs;  // sample pairs behind each cell

  double at(std::size_t p, std::size_t g) const { return scores[p * gallery.size() + g]; }
  // Column of probe p's own identity in the gallery, if present.
  std::optional<std::size_t> genuine_column(std::size_t p) const;
};

// With `exclude_diagonal`, entry (i, i) is skipped; used when probe and
// gallery are the same set. Throws ContractError on length mismatches or an
// unlabelled sample.
IdentityTable aggregate_per_identity(const Tensor& scores, std::span<const std::string> probe_ids,
                                     std::span<const std::string> gallery_ids, Aggregation aggregation = Aggregation::Mean,
                                     bool exclude_diagonal = false);

inline constexpr std::size_t kRocGridPoints = 1001;
inline double roc_grid_fmr(std::size_t i) { return static_cast<double>(i) / static_cast<double>(kRocGridPoints - 1); }

// TMR sampled on the shared FMR grid i / 1000.
struct RocCurve {
  std::vector<double> tmr = std::vector<double>(kRocGridPoints, 0.0);

  double eer() const;
  double auc() const;
  double fnmr_at(double fmr) const;
  double f1f() const { return fnmr_at(0.01); }
};

// Exact ROC polyline of genuine vs impostor scores (accept when score >=
// threshold, ties drawn as diagonal segments) sampled on the grid. Where the
// polyline jumps vertically at a grid FMR, the upper value is taken. Throws
// ContractError when either list is empty.
RocCurve roc_from_scores(std::span<const double> genuine, std::span<const double> impostor);

struct IdentityRoc {
  std::string identity;
  RocCurve curve;
};

// One curve per probe identity that has a genuine cell and at least one
// impostor cell; others are skipped with a message appended to `warnings`.
std::vector<IdentityRoc> roc_per_identity(const IdentityTable& table, std::vector<std::string>& warnings,
                                          std::span<const std::string> only_probes = {});
// Pointwise TMR mean. Throws ContractError on an empty list.
RocCurve average_roc(std::span<const IdentityRoc> curves);

// Fraction of probe identities with a genuine cell and an impostor cell
// whose genuine score is strictly the row maximum. Throws ContractError when
// no probe qualifies.
double rank1(const IdentityTable& table);

struct EvaluationOptions {
  Aggregation aggregation = Aggregation::Mean;
  bool subgroups = true;
};

struct MetricsReport {
  double eer = 0.0;
  double auc = 0.0;
  double r1 = 0.0;
  double f1f = 0.0;
  RocCurve roc;
  std::size_t identities = 0;  // probe identities behind the averaged curve
  std::size_t genuine_pairs = 0;
  std::size_t impostor_pairs = 0;
  std::map<std::string, RocCurve> subgroups;
  std::map<std::string, std::size_t> subgroup_identities;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  // fmr,tmr_all[,tmr_<cell>...]
  void write_roc_csv(const std::filesystem::path& path) const;
};

// Probe identities restricted to each gender|ethnicity cell of the probe
// set. Cells with fewer than two identities are skipped with a warning.
// Throws ContractError when no probe sample carries tags.
std::map<std::string, RocCurve> subgroup_rocs(const IdentityTable& table, const EmbeddingSet& probes,
                                              std::vector<std::string>& warnings,
                                              std::map<std::string, std::size_t>* identity_counts = nullptr);

// All-pairs evaluation within one set (self-pairs excluded).
MetricsReport evaluate(const EmbeddingSet& set, const EvaluationOptions& options = {});
// Probe set against a separate gallery.
MetricsReport evaluate(const EmbeddingSet& probes, const EmbeddingSet& gallery, const EvaluationOptions& options = {});
// Metrics from an already aggregated table; no subgroups.
MetricsReport evaluate_table(const IdentityTable& table);

// CSV `sample_id,identity_id,e0,...,e{D-1}` with optional `gender` and
// `ethnicity` columns, or the tensor blob format (anything not ending in
// .csv). Throws LoadError.
void save_embeddings(const std::filesystem::path& path, const EmbeddingSet& set);
EmbeddingSet load_embeddings(const std::filesystem::path& path);

}  // namespace edgeear
