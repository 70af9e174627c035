// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "edgeear/blob.hpp"
#include "edgeear/error.hpp"
#include "edgeear/parallel.hpp"

namespace edgeear {

void EmbeddingSet::validate() const {
  if (vectors.rank() != 2) throw ContractError("embedding matrix must be [N x D], got " + shape_str(vectors.shape()));
  const std::size_t n = vectors.size(0);
  if (sample_ids.size() != n || identities.size() != n || subgroups.size() != n) {
    throw ContractError("embedding set columns differ in length");
  }
  if (dim() == 0) throw ContractError("embeddings have zero dimension");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    if (identities[i].empty()) throw ContractError("sample '" + sample_ids[i] + "' has no identity");
    ids.insert(identities[i]);
  }
  if (ids.size() < 2) throw ContractError("evaluation needs at least two identities");
  const auto v = vectors.values();
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) {
      const double x = v[i * dim() + j];
      if (!std::isfinite(x)) throw NumericError("embedding of sample '" + sample_ids[i] + "' is not finite");
      sq += x * x;
    }
    if (sq == 0.0) throw NumericError("embedding of sample '" + sample_ids[i] + "' is the zero vector");
  }
}

EmbeddingSet EmbeddingSet::subset(std::span<const std::size_t> rows) const {
  EmbeddingSet out;
  const std::size_t d = dim();
  out.vectors = Tensor({rows.size(), d});
  auto dst = out.vectors.mutable_values();
  const auto src = vectors.values();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    out.sample_ids.push_back(sample_ids.at(r));
    out.identities.push_back(identities.at(r));
    out.subgroups.push_back(subgroups.at(r));
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * d), d, dst.begin() + static_cast<std::ptrdiff_t>(k * d));
  }
  return out;
}

namespace {

std::vector<double> unit_rows(const EmbeddingSet& s) {
  const std::size_t n = s.size(), d = s.dim();
  if (s.vectors.rank() != 2 || s.vectors.size(0) != n) throw ContractError("embedding set columns differ in length");
  std::vector<double> out(n * d);
  const auto v = s.vectors.values();
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += v[i * d + j] * v[i * d + j];
    if (!(sq > 0.0) || !std::isfinite(sq)) {
      throw NumericError("embedding of sample '" + s.sample_ids[i] + "' has zero or non-finite norm");
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = v[i * d + j] * inv;
  }
  return out;
}

}  // namespace

Tensor cosine_matrix(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.dim() != b.dim()) {
    throw ContractError("embedding dimensions differ: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  const std::vector<double> ua = unit_rows(a), ub = unit_rows(b);
  const std::size_t na = a.size(), nb = b.size(), d = a.dim();
  Tensor out({na, nb});
  auto o = out.mutable_values();
  parallel_for(na, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < nb; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += ua[i * d + k] * ub[j * d + k];
        o[i * nb + j] = std::clamp(dot, -1.0, 1.0);
      }
    }
  });
  return out;
}

double cosine_separation(const EmbeddingSet& set) {
  const Tensor c = cosine_matrix(set, set);
  const std::size_t n = set.size();
  double within = 0.0, between = 0.0;
  std::size_t nw = 0, nb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (set.identities[i] == set.identities[j]) {
        within += c.values()[i * n + j];
        ++nw;
      } else {
        between += c.values()[i * n + j];
        ++nb;
      }
    }
  }
  if (nw == 0 || nb == 0) throw ContractError("separation needs same- and different-identity pairs");
  return within / static_cast<double>(nw) - between / static_cast<double>(nb);
}

std::string to_string(Aggregation a) { return a == Aggregation::Mean ? "mean" : "max"; }

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "mean") return Aggregation::Mean;
  if (s == "max") return Aggregation::Max;
  throw ConfigError("eval.aggregation: expected mean or max, got '" + s + "'");
}

// ---------------------------------------------------------------------------

std::optional<std::size_t> IdentityTable::genuine_column(std::size_t p) const {
  auto it = std::ranges::lower_bound(gallery, probes[p]);
  if (it == gallery.end() || *it != probes[p]) return std::nullopt;
  return static_cast<std::size_t>(it - gallery.begin());
}

namespace {

std::vector<std::string> sorted_unique(std::span<const std::string> ids) {
  std::vector<std::string> out(ids.begin(), ids.end());
  std::ranges::sort(out);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::size_t> index_into(std::span<const std::string> ids, const std::vector<std::string>& sorted) {
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    out.push_back(static_cast<std::size_t>(std::ranges::lower_bound(sorted, id) - sorted.begin()));
  }
  return out;
}

}  // namespace

IdentityTable aggregate_per_identity(const Tensor& scores, std::span<const std::string> probe_ids,
                                     std::span<const std::string> gallery_ids, Aggregation aggregation,
                                     bool exclude_diagonal) {
  if (scores.rank() != 2 || scores.size(0) != probe_ids.size() || scores.size(1) != gallery_ids.size()) {
    throw ContractError("score matrix " + shape_str(scores.shape()) + " does not match " +
                        std::to_string(probe_ids.size()) + " probes x " + std::to_string(gallery_ids.size()) +
                        " gallery samples");
  }
  if (probe_ids.empty() || gallery_ids.empty()) throw ContractError("identity with zero samples");
  if (exclude_diagonal && probe_ids.size() != gallery_ids.size()) {
    throw ContractError("diagonal exclusion needs a square score matrix");
  }
  for (const auto& id : probe_ids)
    if (id.empty()) throw ContractError("unlabelled probe sample");
  for (const auto& id : gallery_ids)
    if (id.empty()) throw ContractError("unlabelled gallery sample");

  IdentityTable t;
  t.probes = sorted_unique(probe_ids);
  t.gallery = sorted_unique(gallery_ids);
  const std::size_t np = t.probes.size(), ng = t.gallery.size();
  const auto pi = index_into(probe_ids, t.probes);
  const auto gi = index_into(gallery_ids, t.gallery);
  std::vector<double> acc(np * ng, aggregation == Aggregation::Mean ? 0.0 : -std::numeric_limits<double>::infinity());
  t.pairs.assign(np * ng, 0);
  const auto s = scores.values();
  const std::size_t nb = gallery_ids.size();
  for (std::size_t i = 0; i < probe_ids.size(); ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      if (exclude_diagonal && i == j) continue;
      const std::size_t cell = pi[i] * ng + gi[j];
      const double v = s[i * nb + j];
      if (aggregation == Aggregation::Mean) {
        acc[cell] += v;
      } else {
        acc[cell] = std::max(acc[cell], v);
      }
      ++t.pairs[cell];
    }
  }
  t.scores.resize(np * ng);
  for (std::size_t c = 0; c < np * ng; ++c) {
    if (t.pairs[c] == 0) {
      t.scores[c] = std::numeric_limits<double>::quiet_NaN();
    } else {
      t.scores[c] = aggregation == Aggregation::Mean ? acc[c] / static_cast<double>(t.pairs[c]) : acc[c];
    }
  }
  return t;
}

// ---------------------------------------------------------------------------

double RocCurve::eer() const {
  // d = FMR - FNMR grows strictly along the grid; locate its sign change.
  auto d = [&](std::size_t i) { return roc_grid_fmr(i) - (1.0 - tmr[i]); };
  if (d(0) >= 0.0) return 0.0;
  for (std::size_t i = 1; i < kRocGridPoints; ++i) {
    const double di = d(i);
    if (di < 0.0) continue;
    if (di == 0.0) {
      // Midpoint of the zero run, should it span several points.
      std::size_t j = i;
      while (j + 1 < kRocGridPoints && d(j + 1) == 0.0) ++j;
      return 0.5 * (roc_grid_fmr(i) + roc_grid_fmr(j));
    }
    const double dp = d(i - 1);
    const double t = -dp / (di - dp);
    const double fmr = roc_grid_fmr(i - 1) + t * (roc_grid_fmr(i) - roc_grid_fmr(i - 1));
    const double fnmr = (1.0 - tmr[i - 1]) + t * (tmr[i - 1] - tmr[i]);
    return 0.5 * (fmr + fnmr);
  }
  return 1.0;
}

double RocCurve::auc() const {
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < kRocGridPoints; ++i) area += 0.5 * (tmr[i] + tmr[i + 1]);
  return area / static_cast<double>(kRocGridPoints - 1);
}

double RocCurve::fnmr_at(double fmr) const {
  if (!(fmr >= 0.0 && fmr <= 1.0)) throw ContractError("FMR must lie in [0, 1]");
  const double pos = fmr * static_cast<double>(kRocGridPoints - 1);
  const double nearest = std::round(pos);
  if (std::abs(pos - nearest) < 1e-9) return 1.0 - tmr[static_cast<std::size_t>(nearest)];
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double t = pos - static_cast<double>(lo);
  return 1.0 - ((1.0 - t) * tmr[lo] + t * tmr[lo + 1]);
}

RocCurve roc_from_scores(std::span<const double> genuine, std::span<const double> impostor) {
  if (genuine.empty() || impostor.empty()) throw ContractError("ROC needs genuine and impostor scores");
  std::vector<double> thresholds(genuine.begin(), genuine.end());
  thresholds.insert(thresholds.end(), impostor.begin(), impostor.end());
  std::ranges::sort(thresholds, std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::vector<double> g(genuine.begin(), genuine.end()), im(impostor.begin(), impostor.end());
  std::ranges::sort(g, std::greater<>());
  std::ranges::sort(im, std::greater<>());
  const double ng = static_cast<double>(g.size()), ni = static_cast<double>(im.size());

  // Polyline vertices for "accept when score >= threshold", thresholds
  // descending; both coordinates are nondecreasing along the list.
  std::vector<std::pair<double, double>> vertices{{0.0, 0.0}};
  std::size_t kg = 0, ki = 0;
  for (double t : thresholds) {
    while (kg < g.size() && g[kg] >= t) ++kg;
    while (ki < im.size() && im[ki] >= t) ++ki;
    vertices.emplace_back(static_cast<double>(ki) / ni, static_cast<double>(kg) / ng);
  }

  RocCurve curve;
  std::size_t j = 0;
  for (std::size_t i = 0; i < kRocGridPoints; ++i) {
    const double f = roc_grid_fmr(i);
    while (j + 1 < vertices.size() && vertices[j + 1].first <= f) ++j;
    const auto [fa, ta] = vertices[j];
    if (fa == f || j + 1 == vertices.size()) {
      curve.tmr[i] = ta;
    } else {
      const auto [fb, tb] = vertices[j + 1];
      curve.tmr[i] = ta + (tb - ta) * (f - fa) / (fb - fa);
    }
  }
  return curve;
}

std::vector<IdentityRoc> roc_per_identity(const IdentityTable& table, std::vector<std::string>& warnings,
                                          std::span<const std::string> only_probes) {
  std::vector<IdentityRoc> out;
  for (std::size_t p = 0; p < table.probes.size(); ++p) {
    const std::string& id = table.probes[p];
    if (!only_probes.empty() && std::ranges::find(only_probes, id) == only_probes.end()) continue;
    const auto gc = table.genuine_column(p);
    if (!gc || std::isnan(table.at(p, *gc))) {
      warnings.push_back("identity '" + id + "' has no genuine comparison; excluded");
      continue;
    }
    std::vector<double> impostor;
    for (std::size_t g = 0; g < table.gallery.size(); ++g) {
      if (g != *gc && !std::isnan(table.at(p, g))) impostor.push_back(table.at(p, g));
    }
    if (impostor.empty()) {
      warnings.push_back("identity '" + id + "' has no impostor comparison; excluded");
      continue;
    }
    const double genuine = table.at(p, *gc);
    out.push_back({id, roc_from_scores(std::span<const double>(&genuine, 1), impostor)});
  }
  return out;
}

RocCurve average_roc(std::span<const IdentityRoc> curves) {
  if (curves.empty()) throw ContractError("no identity has both genuine and impostor comparisons");
  RocCurve avg;
  for (const auto& c : curves)
    for (std::size_t i = 0; i < kRocGridPoints; ++i) avg.tmr[i] += c.curve.tmr[i];
  for (double& v : avg.tmr) v /= static_cast<double>(curves.size());
  return avg;
}

double rank1(const IdentityTable& table) {
  std::size_t total = 0, correct = 0;
  for (std::size_t p = 0; p < table.probes.size(); ++p) {
    const auto gc = table.genuine_column(p);
    if (!gc || std::isnan(table.at(p, *gc))) continue;
    const double genuine = table.at(p, *gc);
    bool has_impostor = false, strict_max = true;
    for (std::size_t g = 0; g < table.gallery.size(); ++g) {
      if (g == *gc || std::isnan(table.at(p, g))) continue;
      has_impostor = true;
      if (table.at(p, g) >= genuine) strict_max = false;
    }
    if (!has_impostor) continue;
    ++total;
    if (strict_max) ++correct;
  }
  if (total == 0) throw ContractError("no probe identity qualifies for rank-1");
  return static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------

std::map<std::string, RocCurve> subgroup_rocs(const IdentityTable& table, const EmbeddingSet& probes,
                                              std::vector<std::string>& warnings,
                                              std::map<std::string, std::size_t>* identity_counts) {
  std::map<std::string, Subgroup> tag_of;
  std::set<std::string> genders, ethnicities;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& sg = probes.subgroups[i];
    if (!sg) continue;
    auto [it, inserted] = tag_of.emplace(probes.identities[i], *sg);
    if (!inserted && !(it->second == *sg)) {
      warnings.push_back("identity '" + probes.identities[i] + "' carries conflicting subgroup tags; using " +
                         it->second.cell());
    }
    genders.insert(sg->gender);
    ethnicities.insert(sg->ethnicity);
  }
  if (tag_of.empty()) throw ContractError("no probe sample carries subgroup tags");

  std::map<std::string, RocCurve> out;
  for (const auto& gender : genders) {
    for (const auto& ethnicity : ethnicities) {
      const std::string cell = Subgroup{gender, ethnicity}.cell();
      std::vector<std::string> members;
      for (const auto& [id, sg] : tag_of)
        if (sg.gender == gender && sg.ethnicity == ethnicity) members.push_back(id);
      if (members.size() < 2) {
        warnings.push_back("subgroup '" + cell + "' has " + std::to_string(members.size()) +
                           " identit" + (members.size() == 1 ? "y" : "ies") + "; skipped");
        continue;
      }
      std::vector<std::string> scratch;
      const auto curves = roc_per_identity(table, scratch, members);
      if (curves.empty()) {
        warnings.push_back("subgroup '" + cell + "' has no identity with genuine and impostor comparisons; skipped");
        continue;
      }
      out.emplace(cell, average_roc(curves));
      if (identity_counts) (*identity_counts)[cell] = curves.size();
    }
  }
  return out;
}

namespace {

void count_pairs(const IdentityTable& table, MetricsReport& r) {
  for (std::size_t p = 0; p < table.probes.size(); ++p) {
    const auto gc = table.genuine_column(p);
    for (std::size_t g = 0; g < table.gallery.size(); ++g) {
      const std::size_t n = table.pairs[p * table.gallery.size() + g];
      if (gc && g == *gc) {
        r.genuine_pairs += n;
      } else {
        r.impostor_pairs += n;
      }
    }
  }
}

MetricsReport finish(const IdentityTable& table, const EmbeddingSet* probes, const EvaluationOptions& options) {
  MetricsReport r;
  const auto curves = roc_per_identity(table, r.warnings);
  r.roc = average_roc(curves);
  r.identities = curves.size();
  r.eer = r.roc.eer();
  r.auc = r.roc.auc();
  r.f1f = r.roc.f1f();
  r.r1 = rank1(table);
  count_pairs(table, r);
  if (probes && options.subgroups) {
    const bool tagged = std::ranges::any_of(probes->subgroups, [](const auto& s) { return s.has_value(); });
    if (tagged) {
      r.subgroups = subgroup_rocs(table, *probes, r.warnings, &r.subgroup_identities);
    } else {
      r.warnings.emplace_back("no subgroup tags; subgroup curves skipped");
    }
  }
  for (const auto& w : r.warnings) spdlog::warn("evaluation: {}", w);
  return r;
}

}  // namespace

MetricsReport evaluate(const EmbeddingSet& set, const EvaluationOptions& options) {
  set.validate();
  const Tensor scores = cosine_matrix(set, set);
  return finish(aggregate_per_identity(scores, set.identities, set.identities, options.aggregation, true), &set,
                options);
}

MetricsReport evaluate(const EmbeddingSet& probes, const EmbeddingSet& gallery, const EvaluationOptions& options) {
  probes.validate();
  gallery.validate();
  const Tensor scores = cosine_matrix(probes, gallery);
  return finish(aggregate_per_identity(scores, probes.identities, gallery.identities, options.aggregation, false),
                &probes, options);
}

MetricsReport evaluate_table(const IdentityTable& table) { return finish(table, nullptr, {}); }

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j{{"eer", eer},
                   {"auc", auc},
                   {"r1", r1},
                   {"f1f", f1f},
                   {"identities", identities},
                   {"genuine_pairs", genuine_pairs},
                   {"impostor_pairs", impostor_pairs}};
  j["subgroups"] = nlohmann::json::object();
  for (const auto& [cell, curve] : subgroups) {
    j["subgroups"][cell] = {{"eer", curve.eer()},
                            {"auc", curve.auc()},
                            {"f1f", curve.f1f()},
                            {"identities", subgroup_identities.contains(cell) ? subgroup_identities.at(cell) : 0}};
  }
  j["warnings"] = warnings;
  return j;
}

void MetricsReport::write_roc_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw LoadError(path.string() + ": cannot write");
  out << "fmr,tmr_all";
  for (const auto& [cell, _] : subgroups) out << ",tmr_" << cell;
  out << "\n";
  char buf[64];
  for (std::size_t i = 0; i < kRocGridPoints; ++i) {
    std::snprintf(buf, sizeof buf, "%.3f,%.10g", roc_grid_fmr(i), roc.tmr[i]);
    out << buf;
    for (const auto& [_, curve] : subgroups) {
      std::snprintf(buf, sizeof buf, ",%.10g", curve.tmr[i]);
      out << buf;
    }
    out << "\n";
  }
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool has_csv_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::ranges::transform(ext, ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".csv";
}

EmbeddingSet load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw LoadError(path.string() + ": empty file");
  const auto header = split_fields(line);
  std::ptrdiff_t sid = -1, iid = -1, gcol = -1, ecol = -1;
  std::vector<std::pair<std::size_t, std::size_t>> dims;  // (component index, column)
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "sample_id") {
      sid = static_cast<std::ptrdiff_t>(c);
    } else if (h == "identity_id") {
      iid = static_cast<std::ptrdiff_t>(c);
    } else if (h == "gender") {
      gcol = static_cast<std::ptrdiff_t>(c);
    } else if (h == "ethnicity") {
      ecol = static_cast<std::ptrdiff_t>(c);
    } else if (h.size() > 1 && h[0] == 'e' && std::all_of(h.begin() + 1, h.end(), ::isdigit)) {
      dims.emplace_back(std::stoul(h.substr(1)), c);
    } else {
      throw LoadError(path.string() + ": unexpected column '" + h + "'");
    }
  }
  if (sid < 0 || iid < 0) throw LoadError(path.string() + ": header needs sample_id and identity_id");
  if ((gcol < 0) != (ecol < 0)) throw LoadError(path.string() + ": gender and ethnicity come together");
  std::ranges::sort(dims);
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (dims[k].first != k) throw LoadError(path.string() + ": embedding columns must be e0..e" + std::to_string(dims.size() - 1));
  }
  if (dims.empty()) throw LoadError(path.string() + ": no embedding columns");

  EmbeddingSet set;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_fields(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (f.size() != header.size()) throw LoadError(where + ": expected " + std::to_string(header.size()) + " fields");
    set.sample_ids.push_back(f[static_cast<std::size_t>(sid)]);
    set.identities.push_back(f[static_cast<std::size_t>(iid)]);
    if (gcol >= 0 && !f[static_cast<std::size_t>(gcol)].empty()) {
      set.subgroups.push_back(Subgroup{f[static_cast<std::size_t>(gcol)], f[static_cast<std::size_t>(ecol)]});
    } else {
      set.subgroups.emplace_back();
    }
    for (const auto& [_, col] : dims) {
      const std::string& s = f[col];
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size()) throw LoadError(where + ": bad number '" + s + "'");
      values.push_back(v);
    }
  }
  set.vectors = Tensor({set.sample_ids.size(), dims.size()}, std::move(values));
  return set;
}

void save_csv(const std::filesystem::path& path, const EmbeddingSet& set) {
  std::ofstream out(path);
  if (!out) throw LoadError(path.string() + ": cannot write");
  const bool tags = std::ranges::any_of(set.subgroups, [](const auto& s) { return s.has_value(); });
  out << "sample_id,identity_id";
  if (tags) out << ",gender,ethnicity";
  for (std::size_t k = 0; k < set.dim(); ++k) out << ",e" << k;
  out << "\n";
  char buf[40];
  const auto v = set.vectors.values();
  for (std::size_t i = 0; i < set.size(); ++i) {
    out << set.sample_ids[i] << "," << set.identities[i];
    if (tags) {
      if (set.subgroups[i]) {
        out << "," << set.subgroups[i]->gender << "," << set.subgroups[i]->ethnicity;
      } else {
        out << ",,";
      }
    }
    for (std::size_t k = 0; k < set.dim(); ++k) {
      std::snprintf(buf, sizeof buf, ",%.17g", v[i * set.dim() + k]);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw LoadError(path.string() + ": write failed");
}

}  // namespace

void save_embeddings(const std::filesystem::path& path, const EmbeddingSet& set) {
  for (const auto& s : set.sample_ids) {
    if (s.find(',') != std::string::npos) throw ContractError("sample id '" + s + "' contains a comma");
  }
  if (has_csv_extension(path)) {
    save_csv(path, set);
    return;
  }
  nlohmann::json meta{{"sample_ids", set.sample_ids}, {"identities", set.identities}};
  meta["subgroups"] = nlohmann::json::array();
  for (const auto& s : set.subgroups) {
    meta["subgroups"].push_back(s ? nlohmann::json{s->gender, s->ethnicity} : nlohmann::json(nullptr));
  }
  const NamedTensor t{"embeddings", set.vectors};
  save_blob(path, std::span<const NamedTensor>(&t, 1), meta);
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  if (has_csv_extension(path)) return load_csv(path);
  const Blob blob = load_blob(path);
  EmbeddingSet set;
  try {
    set.vectors = blob.at("embeddings");
    set.sample_ids = blob.meta.at("sample_ids").get<std::vector<std::string>>();
    set.identities = blob.meta.at("identities").get<std::vector<std::string>>();
    for (const auto& s : blob.meta.at("subgroups")) {
      if (s.is_null()) {
        set.subgroups.emplace_back();
      } else {
        set.subgroups.push_back(Subgroup{s.at(0).get<std::string>(), s.at(1).get<std::string>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": malformed embedding blob: " + e.what());
  }
  if (set.vectors.rank() != 2 || set.vectors.size(0) != set.sample_ids.size()) {
    throw LoadError(path.string() + ": embedding blob rows do not match its labels");
  }
  return set;
}

}  // namespace edgeear
