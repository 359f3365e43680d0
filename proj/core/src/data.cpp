/**
 * Copyright 2026 The ldcsf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ldcsf/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ldcsf/errors.hpp"

namespace ldcsf::data {

std::vector<TileOrigin> tile_grid(std::size_t width, std::size_t height, std::size_t tile, std::size_t stride) {
  if (tile == 0 || stride == 0) {
    throw ConfigError("tile and stride must be positive");
  }
  if (width < tile || height < tile) {
    throw DataError("slide " + std::to_string(width) + "x" + std::to_string(height) + " is smaller than one " +
                    std::to_string(tile) + "px tile");
  }
  const std::size_t nx = (width - tile) / stride + 1;
  const std::size_t ny = (height - tile) / stride + 1;
  std::vector<TileOrigin> origins;
  origins.reserve(nx * ny);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      origins.push_back({i * stride, j * stride});
    }
  }
  return origins;
}

std::vector<Tile> patchify(const RgbImage& slide, std::size_t tile, std::size_t stride) {
  std::vector<Tile> tiles;
  for (const auto& o : tile_grid(slide.width, slide.height, tile, stride)) {
    tiles.push_back({o, crop(slide, o.x, o.y, tile, tile)});
  }
  return tiles;
}

void RegionMasks::set(std::size_t label, Mask mask) {
  if (label >= kNumLabels) {
    throw ConfigError("mask label index out of range");
  }
  if (mask.width != width || mask.height != height) {
    throw DataError("mask for " + std::string(kLabelNames[label]) + " is " + std::to_string(mask.width) + "x" +
                    std::to_string(mask.height) + ", slide is " + std::to_string(width) + "x" + std::to_string(height));
  }
  masks[label] = std::move(mask);
}

LabelVector assign_labels(const TileOrigin& origin, std::size_t tile, const RegionMasks& masks, double tau) {
  if (origin.x + tile > masks.width || origin.y + tile > masks.height) {
    throw DataError("tile extends past the mask bounds");
  }
  LabelVector labels;
  const double area = static_cast<double>(tile * tile);
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    if (!masks.masks[l]) {
      continue;
    }
    const Mask& m = *masks.masks[l];
    std::size_t inside = 0;
    for (std::size_t y = origin.y; y < origin.y + tile; ++y) {
      const auto* row = m.bits.data() + y * m.width + origin.x;
      inside += static_cast<std::size_t>(std::count_if(row, row + tile, [](std::uint8_t b) { return b != 0; }));
    }
    labels.bits[l] = static_cast<double>(inside) / area >= tau ? 1 : 0;
  }
  return labels;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split '" + std::string(name) + "'");
}

std::optional<Split> TileRecord::split_in(std::size_t round) const {
  for (const auto& s : splits) {
    if (s.round == round) {
      return s.split;
    }
  }
  return std::nullopt;
}

std::map<unsigned, std::size_t> combination_counts(const std::vector<TileRecord>& records) {
  std::map<unsigned, std::size_t> counts;
  for (const auto& r : records) {
    ++counts[r.labels.mask()];
  }
  return counts;
}

std::vector<TileRecord> balance(const std::vector<TileRecord>& records, double max_ratio, std::uint64_t seed) {
  if (records.empty()) {
    throw DataError("balance: no records");
  }
  if (!(max_ratio >= 1.0)) {
    throw ConfigError("balance ratio must be >= 1");
  }
  std::map<unsigned, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    groups[records[i].labels.mask()].push_back(i);
  }
  std::size_t smallest = records.size();
  for (const auto& [_, members] : groups) {
    smallest = std::min(smallest, members.size());
  }
  const double cap = std::floor(max_ratio * static_cast<double>(smallest));
  std::vector<char> keep(records.size(), 1);
  const Rng base = Rng(seed).derive("balance");
  for (auto& [combo, members] : groups) {
    if (static_cast<double>(members.size()) <= cap) {
      continue;
    }
    Rng rng = base.derive({combo});
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t k = static_cast<std::size_t>(cap); k < members.size(); ++k) {
      keep[members[k]] = 0;
    }
  }
  std::vector<TileRecord> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) {
      out.push_back(records[i]);
    }
  }
  return out;
}

void make_splits(std::vector<TileRecord>& records, std::size_t rounds, SplitFractions f, std::uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be nonnegative and sum to 1");
  }
  if (records.size() < 10) {
    throw DataError("need at least 10 records to split, got " + std::to_string(records.size()));
  }
  const std::size_t n = records.size();
  // The epsilon absorbs representation error such as 0.1 * 30 = 3.0000000000000004.
  const auto n_val = static_cast<std::size_t>(std::floor(f.val * static_cast<double>(n) + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(f.test * static_cast<double>(n) + 1e-9));
  const std::size_t n_train = n - n_val - n_test;
  for (auto& r : records) {
    r.splits.clear();
  }
  const Rng base = Rng(seed).derive("splits");
  std::vector<std::size_t> order(n);
  for (std::size_t round = 0; round < rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      order[i] = i;
    }
    Rng rng = base.derive({round});
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t k = 0; k < n; ++k) {
      const Split s = k < n_train ? Split::kTrain : (k < n_train + n_val ? Split::kVal : Split::kTest);
      records[order[k]].splits.push_back({round, s});
    }
  }
}

void write_manifest(const std::filesystem::path& path, const std::vector<TileRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw DataError("cannot write manifest " + path.string());
  }
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["path"] = r.path;
    j["x"] = r.x;
    j["y"] = r.y;
    j["labels"] = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      if (r.labels.bits[l]) {
        j["labels"].push_back(kLabelNames[l]);
      }
    }
    j["splits"] = nlohmann::ordered_json::array();
    for (const auto& s : r.splits) {
      j["splits"].push_back({{"round", s.round}, {"split", split_name(s.split)}});
    }
    out << j.dump() << '\n';
  }
}

std::vector<TileRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open manifest " + path.string());
  }
  std::vector<TileRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      TileRecord r;
      r.path = j.at("path").get<std::string>();
      r.x = j.at("x").get<std::size_t>();
      r.y = j.at("y").get<std::size_t>();
      for (const auto& name : j.at("labels")) {
        const auto idx = label_index(name.get<std::string>());
        if (!idx) {
          throw DataError(where + "unknown label '" + name.get<std::string>() + "'");
        }
        r.labels.bits[*idx] = 1;
      }
      if (!r.labels.any()) {
        throw DataError(where + "record has no labels");
      }
      if (j.contains("splits")) {
        for (const auto& s : j.at("splits")) {
          r.splits.push_back({s.at("round").get<std::size_t>(), parse_split(s.at("split").get<std::string>())});
        }
      }
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + e.what());
    }
  }
  return records;
}

RgbImage flip(const RgbImage& image, FlipAxis axis) {
  RgbImage out(image.width, image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const std::size_t sx = axis == FlipAxis::kHorizontal ? image.width - 1 - x : x;
      const std::size_t sy = axis == FlipAxis::kVertical ? image.height - 1 - y : y;
      for (std::size_t c = 0; c < 3; ++c) {
        out.at(x, y, c) = image.at(sx, sy, c);
      }
    }
  }
  return out;
}

Hsv rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0 ? delta / mx : 0.0;
  if (delta > 0) {
    double h;
    if (mx == r) {
      h = (g - b) / delta;
    } else if (mx == g) {
      h = 2.0 + (b - r) / delta;
    } else {
      h = 4.0 + (r - g) / delta;
    }
    h /= 6.0;
    out.h = h < 0 ? h + 1.0 : h;
  }
  return out;
}

std::array<double, 3> hsv_to_rgb(const Hsv& hsv) {
  const double h6 = (hsv.h - std::floor(hsv.h)) * 6.0;
  const auto sector = static_cast<int>(h6) % 6;
  const double f = h6 - std::floor(h6);
  const double v = hsv.v;
  const double p = v * (1 - hsv.s);
  const double q = v * (1 - hsv.s * f);
  const double t = v * (1 - hsv.s * (1 - f));
  switch (sector) {
    case 0:
      return {v, t, p};
    case 1:
      return {q, v, p};
    case 2:
      return {p, v, t};
    case 3:
      return {p, q, v};
    case 4:
      return {t, p, v};
    default:
      return {v, p, q};
  }
}

HsvJitter sample_jitter(const HsvBounds& bounds, Rng& rng) {
  HsvJitter j;
  j.hue_delta = rng.uniform(-bounds.hue, bounds.hue);
  j.sat_scale = rng.uniform(bounds.sat_low, bounds.sat_high);
  j.val_scale = rng.uniform(bounds.val_low, bounds.val_high);
  return j;
}

RgbImage apply_hsv(const RgbImage& image, const HsvJitter& jitter) {
  RgbImage out(image.width, image.height);
  for (std::size_t i = 0; i < image.pixels.size(); i += 3) {
    Hsv hsv = rgb_to_hsv(image.pixels[i] / 255.0, image.pixels[i + 1] / 255.0, image.pixels[i + 2] / 255.0);
    hsv.h += jitter.hue_delta;
    hsv.h -= std::floor(hsv.h);
    hsv.s = std::clamp(hsv.s * jitter.sat_scale, 0.0, 1.0);
    hsv.v = std::clamp(hsv.v * jitter.val_scale, 0.0, 1.0);
    const auto rgb = hsv_to_rgb(hsv);
    for (std::size_t c = 0; c < 3; ++c) {
      out.pixels[i + c] = static_cast<std::uint8_t>(std::clamp(std::lround(rgb[c] * 255.0), 0L, 255L));
    }
  }
  return out;
}

RgbImage random_hsv(const RgbImage& image, const HsvBounds& bounds, Rng& rng) {
  return apply_hsv(image, sample_jitter(bounds, rng));
}

RgbImage augment(const RgbImage& image, const AugmentConfig& cfg, Rng& rng) {
  const bool hflip = rng.bernoulli(0.5);
  const bool vflip = rng.bernoulli(0.5);
  const HsvJitter jitter = sample_jitter(cfg.bounds, rng);
  RgbImage out = image;
  if (cfg.horizontal_flip && hflip) {
    out = flip(out, FlipAxis::kHorizontal);
  }
  if (cfg.vertical_flip && vflip) {
    out = flip(out, FlipAxis::kVertical);
  }
  if (cfg.hsv) {
    out = apply_hsv(out, jitter);
  }
  return out;
}

namespace {

struct Texture {
  std::array<double, 3> base;
  std::array<double, 3> accent;
};

// Rough H&E-like palettes, deliberately far apart so a tiny model separates them.
constexpr std::array<Texture, kNumLabels> kTextures = {{
    {{0.93, 0.62, 0.72}, {0.80, 0.35, 0.50}},  // interstitial: pink, horizontal fibres
    {{0.85, 0.82, 0.78}, {0.60, 0.55, 0.52}},  // necrosis: pale grey, speckle
    {{0.70, 0.55, 0.85}, {0.95, 0.90, 0.98}},  // non_tumor: lilac, regular dots
    {{0.35, 0.20, 0.55}, {0.15, 0.05, 0.30}},  // tumor: dark purple, large nuclei
}};

double pattern(std::size_t label, std::size_t x, std::size_t y, std::size_t size, Rng& rng) {
  const double u = static_cast<double>(x) / static_cast<double>(size);
  const double v = static_cast<double>(y) / static_cast<double>(size);
  switch (label) {
    case kInterstitial:
      return std::fmod(v * 8.0, 1.0) < 0.4 ? 1.0 : 0.0;
    case kNecrosis:
      return rng.uniform() < 0.3 ? 1.0 : 0.0;
    case kNonTumor: {
      const double du = std::fmod(u * 8.0, 1.0) - 0.5;
      const double dv = std::fmod(v * 8.0, 1.0) - 0.5;
      return du * du + dv * dv < 0.06 ? 1.0 : 0.0;
    }
    default: {
      const double du = std::fmod(u * 3.0, 1.0) - 0.5;
      const double dv = std::fmod(v * 3.0, 1.0) - 0.5;
      return du * du + dv * dv < 0.12 ? 1.0 : 0.0;
    }
  }
}

}  // namespace

RgbImage synth_tile(const LabelVector& labels, std::size_t size, Rng& rng) {
  if (!labels.any()) {
    throw DataError("synth_tile: empty label vector");
  }
  std::vector<std::size_t> present;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    if (labels.bits[l]) {
      present.push_back(l);
    }
  }
  RgbImage out(size, size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t band = std::min(present.size() - 1, x * present.size() / size);
      const std::size_t l = present[band];
      const double w = pattern(l, x, y, size, rng);
      for (std::size_t c = 0; c < 3; ++c) {
        const double value = kTextures[l].base[c] * (1 - w) + kTextures[l].accent[c] * w + rng.uniform(-0.03, 0.03);
        out.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(value * 255.0), 0L, 255L));
      }
    }
  }
  return out;
}

SynthSlide synth_slide(std::size_t cells, std::size_t tile, std::uint64_t seed) {
  if (cells == 0 || tile == 0) {
    throw ConfigError("synth_slide: cells and tile must be positive");
  }
  const std::size_t side = cells * tile;
  SynthSlide s;
  s.slide = RgbImage(side, side);
  s.masks.width = side;
  s.masks.height = side;
  std::array<Mask, kNumLabels> masks;
  masks.fill(Mask(side, side));
  const Rng base = Rng(seed).derive("synth");
  for (std::size_t cy = 0; cy < cells; ++cy) {
    for (std::size_t cx = 0; cx < cells; ++cx) {
      const std::size_t cell = cy * cells + cx;
      const LabelVector labels = LabelVector::from_mask(kReferenceCombinations[cell % kReferenceCombinations.size()]);
      Rng rng = base.derive({cell});
      const RgbImage img = synth_tile(labels, tile, rng);
      std::vector<std::size_t> present;
      for (std::size_t l = 0; l < kNumLabels; ++l) {
        if (labels.bits[l]) {
          present.push_back(l);
        }
      }
      for (std::size_t y = 0; y < tile; ++y) {
        for (std::size_t x = 0; x < tile; ++x) {
          const std::size_t gx = cx * tile + x;
          const std::size_t gy = cy * tile + y;
          for (std::size_t c = 0; c < 3; ++c) {
            s.slide.at(gx, gy, c) = img.at(x, y, c);
          }
          masks[present[std::min(present.size() - 1, x * present.size() / tile)]].at(gx, gy) = 1;
        }
      }
    }
  }
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    s.masks.set(l, std::move(masks[l]));
  }
  return s;
}

}  // namespace ldcsf::data
