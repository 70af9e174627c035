// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include "edgeear/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <spdlog/spdlog.h>

#include "edgeear/error.hpp"
#include "edgeear/image.hpp"
#include "edgeear/parallel.hpp"
#include "edgeear/rng.hpp"

namespace edgeear {

namespace {

constexpr std::uint64_t kIdentityStream = 0x45617249645eedULL;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string synth_identity_name(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth-%05zu", id);
  return buf;
}

// Shape and colour of one synthetic ear.
struct EarPattern {
  double skin[3];
  double background[3];
  double cx, cy, a, b, tilt;
  double harmonic_amp[4];
  double harmonic_phase[4];
  double rim_width, rim_boost;
  double concha_dx, concha_dy, concha_scale, concha_dark;
  double texture_freq, texture_angle, texture_amp;

  explicit EarPattern(std::size_t id) {
    Rng rng = Rng::derive(kIdentityStream, id);
    skin[0] = rng.uniform(0.55, 0.92);
    skin[1] = skin[0] * rng.uniform(0.62, 0.85);
    skin[2] = skin[1] * rng.uniform(0.65, 0.92);
    for (double& c : background) c = rng.uniform(0.08, 0.4);
    cx = rng.uniform(0.44, 0.56);
    cy = rng.uniform(0.44, 0.56);
    a = rng.uniform(0.24, 0.36);
    b = rng.uniform(0.33, 0.45);
    tilt = rng.uniform(-0.45, 0.45);
    for (int k = 0; k < 4; ++k) {
      harmonic_amp[k] = rng.uniform(0.0, 0.09);
      harmonic_phase[k] = rng.uniform(0.0, kTwoPi);
    }
    rim_width = rng.uniform(0.06, 0.13);
    rim_boost = rng.uniform(0.08, 0.25);
    concha_dx = rng.uniform(-0.12, 0.12);
    concha_dy = rng.uniform(-0.1, 0.1);
    concha_scale = rng.uniform(0.32, 0.55);
    concha_dark = rng.uniform(0.2, 0.5);
    texture_freq = rng.uniform(3.0, 9.0);
    texture_angle = rng.uniform(0.0, std::numbers::pi);
    texture_amp = rng.uniform(0.02, 0.07);
  }

  // Colour at ear-frame coordinates (x, y), centred on the ear.
  void shade(double x, double y, double out[3]) const {
    const double ct = std::cos(tilt), st = std::sin(tilt);
    const double ex = (ct * x + st * y) / a;
    const double ey = (-st * x + ct * y) / b;
    const double theta = std::atan2(ey, ex);
    double radius = 1.0;
    for (int k = 0; k < 4; ++k) radius += harmonic_amp[k] * std::cos((k + 2) * theta + harmonic_phase[k]);
    const double rho = std::hypot(ex, ey) / radius;

    const double cxn = (ex - concha_dx / a) / concha_scale;
    const double cyn = (ey - concha_dy / b) / concha_scale;
    const double rho_c = std::hypot(cxn, cyn);

    const double inside = 1.0 / (1.0 + std::exp((rho - 1.0) / 0.025));
    const double rim = std::exp(-std::pow((1.0 - rho) / rim_width, 2.0)) * rim_boost;
    const double concha = concha_dark / (1.0 + std::exp((rho_c - 1.0) / 0.06));
    const double stripe =
        texture_amp * std::sin(kTwoPi * texture_freq * (x * std::cos(texture_angle) + y * std::sin(texture_angle)));
    for (int ch = 0; ch < 3; ++ch) {
      const double ear = skin[ch] * (0.82 + 0.18 * std::max(0.0, 1.0 - rho)) + rim - concha * skin[ch] + stripe;
      out[ch] = inside * ear + (1.0 - inside) * background[ch];
    }
  }
};

Tensor render(const EarPattern& p, Rng& jitter, std::size_t size) {
  const double tx = jitter.uniform(-0.03, 0.03), ty = jitter.uniform(-0.03, 0.03);
  const double rot = jitter.uniform(-6.0, 6.0) * std::numbers::pi / 180.0;
  const double scale = jitter.uniform(0.96, 1.04);
  const double brightness = jitter.uniform(-0.04, 0.04);
  const double cr = std::cos(rot), sr = std::sin(rot);
  Tensor img({3, size, size});
  auto v = img.mutable_values();
  const std::size_t plane = size * size;
  double rgb[3];
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const double u = (static_cast<double>(j) + 0.5) / static_cast<double>(size) - p.cx - tx;
      const double w = (static_cast<double>(i) + 0.5) / static_cast<double>(size) - p.cy - ty;
      p.shade((cr * u + sr * w) / scale, (-sr * u + cr * w) / scale, rgb);
      for (int ch = 0; ch < 3; ++ch) {
        v[static_cast<std::size_t>(ch) * plane + i * size + j] = rgb[ch] + brightness + jitter.normal(0.0, 0.015);
      }
    }
  }
  image::clamp01(img);
  return img;
}

}  // namespace

Subgroup synthetic_subgroup(std::size_t identity_index) {
  static const char* genders[] = {"male", "female"};
  static const char* ethnicities[] = {"white", "asian"};
  return {genders[identity_index % 2], ethnicities[(identity_index / 2) % 2]};
}

std::vector<Sample> synth_dataset(std::size_t num_ids, std::size_t samples_per_id, std::uint64_t seed,
                                  std::size_t id_offset, std::size_t size) {
  if (num_ids < 2) throw ContractError("synthetic dataset needs at least two identities");
  if (samples_per_id == 0) throw ContractError("synthetic dataset needs at least one sample per identity");
  if (size < 8) throw ContractError("synthetic image size must be at least 8");
  std::vector<Sample> out(num_ids * samples_per_id);
  parallel_for(out.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t id = id_offset + k / samples_per_id;
      const std::size_t j = k % samples_per_id;
      const EarPattern pattern(id);
      Rng jitter = Rng::derive(seed, (static_cast<std::uint64_t>(id) << 24) | j);
      Sample& s = out[k];
      s.identity = synth_identity_name(id);
      s.sample_id = s.identity + "/" + std::to_string(j);
      s.image = render(pattern, jitter, size);
      s.subgroup = synthetic_subgroup(id);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------

AugmentationConfig AugmentationConfig::none() {
  AugmentationConfig c;
  c.rotation_degrees = 0.0;
  c.brightness = c.contrast = c.saturation = c.hue = 0.0;
  c.hflip_prob = c.vflip_prob = 0.0;
  c.affine_degrees = c.affine_translate = c.affine_scale = c.affine_shear = 0.0;
  c.crop_scale_min = 1.0;
  c.blur_sigma_max = 0.0;
  return c;
}

void AugmentationConfig::validate() const {
  auto nonneg = [](const char* name, double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("augment.") + name + ": must be nonnegative");
  };
  nonneg("rotation_degrees", rotation_degrees);
  nonneg("brightness", brightness);
  nonneg("contrast", contrast);
  nonneg("saturation", saturation);
  nonneg("hue", hue);
  nonneg("affine_degrees", affine_degrees);
  nonneg("affine_translate", affine_translate);
  nonneg("affine_scale", affine_scale);
  nonneg("affine_shear", affine_shear);
  nonneg("blur_sigma_max", blur_sigma_max);
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw ConfigError("augment.hflip_prob: must lie in [0, 1]");
  if (!(vflip_prob >= 0.0 && vflip_prob <= 1.0)) throw ConfigError("augment.vflip_prob: must lie in [0, 1]");
  if (brightness >= 1.0 || contrast >= 1.0 || saturation >= 1.0) {
    throw ConfigError("augment: colour jitter strengths must be below 1");
  }
  if (hue > 0.5) throw ConfigError("augment.hue: must be at most 0.5");
  if (affine_scale >= 1.0) throw ConfigError("augment.affine_scale: must be below 1");
  if (affine_shear >= 90.0) throw ConfigError("augment.affine_shear: must be below 90 degrees");
  if (!(crop_scale_min >= 0.0 && crop_scale_min <= 1.0)) throw ConfigError("augment.crop_scale_min: must lie in [0, 1]");
  if (target_size == 0) throw ConfigError("augment.target_size: must be positive");
}

nlohmann::json AugmentationConfig::to_json() const {
  return {{"rotation_degrees", rotation_degrees},
          {"brightness", brightness},
          {"contrast", contrast},
          {"saturation", saturation},
          {"hue", hue},
          {"hflip_prob", hflip_prob},
          {"vflip_prob", vflip_prob},
          {"affine_degrees", affine_degrees},
          {"affine_translate", affine_translate},
          {"affine_scale", affine_scale},
          {"affine_shear", affine_shear},
          {"crop_scale_min", crop_scale_min},
          {"blur_sigma_max", blur_sigma_max},
          {"target_size", target_size}};
}

AugmentationConfig AugmentationConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("augment: expected a table");
  AugmentationConfig c;
  std::map<std::string, double*> fields{
      {"rotation_degrees", &c.rotation_degrees}, {"brightness", &c.brightness},
      {"contrast", &c.contrast},                 {"saturation", &c.saturation},
      {"hue", &c.hue},                           {"hflip_prob", &c.hflip_prob},
      {"vflip_prob", &c.vflip_prob},             {"affine_degrees", &c.affine_degrees},
      {"affine_translate", &c.affine_translate}, {"affine_scale", &c.affine_scale},
      {"affine_shear", &c.affine_shear},         {"crop_scale_min", &c.crop_scale_min},
      {"blur_sigma_max", &c.blur_sigma_max},
  };
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "target_size") {
        c.target_size = value.get<std::size_t>();
      } else if (auto it = fields.find(key); it != fields.end()) {
        *it->second = value.get<double>();
      } else {
        throw ConfigError("augment." + key + ": unknown key");
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("augment." + key + ": wrong type");
    }
  }
  c.validate();
  return c;
}

namespace {

void color_jitter(Tensor& img, const AugmentationConfig& c, Rng& rng) {
  auto v = img.mutable_values();
  const std::size_t plane = img.size(1) * img.size(2);
  auto luma = [&](std::size_t p) { return 0.299 * v[p] + 0.587 * v[plane + p] + 0.114 * v[2 * plane + p]; };
  if (c.brightness > 0.0) {
    const double f = rng.uniform(1.0 - c.brightness, 1.0 + c.brightness);
    for (double& x : v) x = std::clamp(x * f, 0.0, 1.0);
  }
  if (c.contrast > 0.0) {
    const double f = rng.uniform(1.0 - c.contrast, 1.0 + c.contrast);
    double mean = 0.0;
    for (std::size_t p = 0; p < plane; ++p) mean += luma(p);
    mean /= static_cast<double>(plane);
    for (double& x : v) x = std::clamp((x - mean) * f + mean, 0.0, 1.0);
  }
  if (c.saturation > 0.0) {
    const double f = rng.uniform(1.0 - c.saturation, 1.0 + c.saturation);
    for (std::size_t p = 0; p < plane; ++p) {
      const double g = luma(p);
      for (std::size_t ch = 0; ch < 3; ++ch) v[ch * plane + p] = std::clamp((v[ch * plane + p] - g) * f + g, 0.0, 1.0);
    }
  }
  if (c.hue > 0.0) {
    // Rotate the chroma plane of YIQ.
    const double angle = rng.uniform(-c.hue, c.hue) * kTwoPi;
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t p = 0; p < plane; ++p) {
      const double r = v[p], g = v[plane + p], b = v[2 * plane + p];
      const double y = 0.299 * r + 0.587 * g + 0.114 * b;
      const double i = 0.596 * r - 0.274 * g - 0.322 * b;
      const double q = 0.211 * r - 0.523 * g + 0.312 * b;
      const double i2 = ca * i - sa * q, q2 = sa * i + ca * q;
      v[p] = std::clamp(y + 0.956 * i2 + 0.621 * q2, 0.0, 1.0);
      v[plane + p] = std::clamp(y - 0.272 * i2 - 0.647 * q2, 0.0, 1.0);
      v[2 * plane + p] = std::clamp(y - 1.106 * i2 + 1.703 * q2, 0.0, 1.0);
    }
  }
}

Tensor crop(const Tensor& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  const std::size_t c = img.size(0), ih = img.size(1), iw = img.size(2);
  Tensor out({c, h, w});
  auto s = img.values();
  auto d = out.mutable_values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(s.begin() + static_cast<std::ptrdiff_t>((ch * ih + y0 + y) * iw + x0), w,
                  d.begin() + static_cast<std::ptrdiff_t>((ch * h + y) * w));
  return out;
}

}  // namespace

Sample augment(const Sample& sample, const AugmentationConfig& c, std::uint64_t seed) {
  c.validate();
  if (sample.image.rank() != 3 || sample.image.size(0) != 3) {
    throw DimensionError("augment expects a [3 x H x W] image, got " + shape_str(sample.image.shape()));
  }
  Rng rng(seed);
  Tensor img = sample.image;
  if (c.rotation_degrees > 0.0) {
    img = image::affine(img, rng.uniform(-c.rotation_degrees, c.rotation_degrees), 1.0, 0.0, 0.0, 0.0);
  }
  if (c.brightness > 0.0 || c.contrast > 0.0 || c.saturation > 0.0 || c.hue > 0.0) {
    img = img.clone();
    color_jitter(img, c, rng);
  }
  if (c.hflip_prob > 0.0 && rng.bernoulli(c.hflip_prob)) img = image::flip_horizontal(img);
  if (c.vflip_prob > 0.0 && rng.bernoulli(c.vflip_prob)) img = image::flip_vertical(img);
  if (c.affine_degrees > 0.0 || c.affine_translate > 0.0 || c.affine_scale > 0.0 || c.affine_shear > 0.0) {
    const double deg = c.affine_degrees > 0.0 ? rng.uniform(-c.affine_degrees, c.affine_degrees) : 0.0;
    const double tx = c.affine_translate > 0.0 ? rng.uniform(-c.affine_translate, c.affine_translate) : 0.0;
    const double ty = c.affine_translate > 0.0 ? rng.uniform(-c.affine_translate, c.affine_translate) : 0.0;
    const double sc = c.affine_scale > 0.0 ? rng.uniform(1.0 - c.affine_scale, 1.0 + c.affine_scale) : 1.0;
    const double sh = c.affine_shear > 0.0 ? rng.uniform(-c.affine_shear, c.affine_shear) : 0.0;
    img = image::affine(img, deg, sc, sh, tx * static_cast<double>(img.size(2)), ty * static_cast<double>(img.size(1)));
  }
  if (c.crop_scale_min < 1.0) {
    const double side = std::sqrt(rng.uniform(c.crop_scale_min, 1.0));
    const auto cw = static_cast<std::size_t>(std::lround(side * static_cast<double>(img.size(2))));
    const auto ch = static_cast<std::size_t>(std::lround(side * static_cast<double>(img.size(1))));
    if (cw == 0 || ch == 0) {
      spdlog::warn("augment: degenerate crop on sample '{}', keeping the full image", sample.sample_id);
    } else {
      const std::size_t x0 = rng.index(img.size(2) - cw + 1);
      const std::size_t y0 = rng.index(img.size(1) - ch + 1);
      img = crop(img, x0, y0, cw, ch);
    }
  }
  if (c.blur_sigma_max > 0.0) img = image::gaussian_blur(img, rng.uniform(0.0, c.blur_sigma_max));
  img = image::resize(img, c.target_size, c.target_size);
  image::clamp01(img);
  return {sample.sample_id, sample.identity, std::move(img), sample.subgroup};
}

// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::ranges::transform(ext, ext.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

}  // namespace

std::map<std::string, Subgroup> read_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw LoadError(path.string() + ": missing header");
  const auto header = split_csv(line);
  std::ptrdiff_t id_col = -1, gender_col = -1, eth_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "id") id_col = static_cast<std::ptrdiff_t>(i);
    if (header[i] == "gender") gender_col = static_cast<std::ptrdiff_t>(i);
    if (header[i] == "ethnicity") eth_col = static_cast<std::ptrdiff_t>(i);
  }
  if (id_col < 0 || gender_col < 0 || eth_col < 0) {
    throw LoadError(path.string() + ": header must contain id,gender,ethnicity");
  }
  const auto need = static_cast<std::size_t>(std::max({id_col, gender_col, eth_col}));
  std::map<std::string, Subgroup> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() <= need) throw LoadError(path.string() + ":" + std::to_string(line_no) + ": too few columns");
    out[cells[static_cast<std::size_t>(id_col)]] = {cells[static_cast<std::size_t>(gender_col)],
                                                    cells[static_cast<std::size_t>(eth_col)]};
  }
  return out;
}

std::vector<Sample> load_dir(const std::filesystem::path& root, std::size_t size) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw LoadError(root.string() + ": not a directory");

  std::map<std::string, Subgroup> metadata;
  const fs::path meta_path = root / "metadata.csv";
  if (fs::exists(meta_path)) {
    metadata = read_metadata(meta_path);
  } else {
    spdlog::info("load_dir: no metadata.csv under {}, subgroups unset", root.string());
  }

  std::vector<fs::path> identities;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && e.path().filename().string().front() != '.') identities.push_back(e.path());
  }
  std::ranges::sort(identities);

  struct Job {
    std::string identity;
    fs::path file;
  };
  std::vector<Job> jobs;
  for (const auto& dir : identities) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      if (is_image_file(e.path())) {
        files.push_back(e.path());
      } else if (e.path().filename().string().front() != '.') {
        spdlog::warn("load_dir: skipping non-PNM file {}", e.path().string());
      }
    }
    std::ranges::sort(files);
    for (auto& f : files) jobs.push_back({dir.filename().string(), std::move(f)});
  }
  if (jobs.empty()) throw LoadError(root.string() + ": no PPM/PGM images found");

  std::vector<Sample> out(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        Sample& s = out[i];
        s.identity = jobs[i].identity;
        s.sample_id = jobs[i].identity + "/" + jobs[i].file.filename().string();
        s.image = image::resize(image::read_pnm(jobs[i].file), size, size);
        if (auto it = metadata.find(s.identity); it != metadata.end()) s.subgroup = it->second;
      } catch (const Error& e) {
        errors[i] = e.what();
      }
    }
  });
  std::string report;
  std::size_t failed = 0;
  for (const auto& e : errors) {
    if (e.empty()) continue;
    ++failed;
    report += "\n  " + e;
  }
  if (failed > 0) throw LoadError(std::to_string(failed) + " unreadable image(s) under " + root.string() + ":" + report);
  if (!metadata.empty()) {
    for (const auto& s : out) {
      if (!s.subgroup) {
        spdlog::warn("load_dir: identity '{}' has no metadata row", s.identity);
        break;
      }
    }
  }
  return out;
}

LabelMap label_samples(std::span<const Sample> samples) {
  LabelMap m;
  for (const auto& s : samples) m.identities.push_back(s.identity);
  std::ranges::sort(m.identities);
  m.identities.erase(std::unique(m.identities.begin(), m.identities.end()), m.identities.end());
  for (const auto& s : samples) {
    m.labels.push_back(static_cast<std::size_t>(std::ranges::lower_bound(m.identities, s.identity) -
                                                m.identities.begin()));
  }
  return m;
}

Tensor stack_images(std::span<const Sample> samples) {
  if (samples.empty()) throw ContractError("cannot stack an empty batch");
  const Shape one = samples.front().image.shape();
  Shape shape{samples.size()};
  shape.insert(shape.end(), one.begin(), one.end());
  Tensor out(shape);
  auto d = out.mutable_values();
  const std::size_t per = shape_numel(one);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].image.shape() != one) throw DimensionError("batch images differ in shape");
    std::ranges::copy(samples[i].image.values(), d.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

}  // namespace edgeear
