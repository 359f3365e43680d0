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

#ifndef LDCSF_DATA_HPP
#define LDCSF_DATA_HPP

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ldcsf/image.hpp"
#include "ldcsf/labels.hpp"
#include "ldcsf/rng.hpp"

namespace ldcsf::data {

struct TileOrigin {
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const TileOrigin&, const TileOrigin&) = default;
};

// Row-major origins of every full tile; partial right/bottom tiles are
// dropped. Throws DataError if the slide is smaller than one tile.
std::vector<TileOrigin> tile_grid(std::size_t width, std::size_t height, std::size_t tile, std::size_t stride);

struct Tile {
  TileOrigin origin;
  RgbImage image;
};
std::vector<Tile> patchify(const RgbImage& slide, std::size_t tile = 224, std::size_t stride = 224);

/// Per-label masks at slide resolution; an absent mask means "nowhere".
struct RegionMasks {
  std::size_t width = 0;
  std::size_t height = 0;
  std::array<std::optional<Mask>, kNumLabels> masks;

  void set(std::size_t label, Mask mask);
};

// Bit l set iff the fraction of tile pixels inside mask l is >= tau.
LabelVector assign_labels(const TileOrigin& origin, std::size_t tile, const RegionMasks& masks, double tau = 0.05);

enum class Split { kTrain, kVal, kTest };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct SplitAssignment {
  std::size_t round = 0;
  Split split = Split::kTrain;
  friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

struct TileRecord {
  std::string path;  // relative to the manifest directory
  std::size_t x = 0;
  std::size_t y = 0;
  LabelVector labels;
  std::vector<SplitAssignment> splits;

  std::optional<Split> split_in(std::size_t round) const;
  friend bool operator==(const TileRecord&, const TileRecord&) = default;
};

// Count per label combination (LabelVector::mask()).
std::map<unsigned, std::size_t> combination_counts(const std::vector<TileRecord>& records);

// Caps every label combination at floor(max_ratio * smallest count), picking
// survivors by a seeded shuffle. Survivors keep their input order.
std::vector<TileRecord> balance(const std::vector<TileRecord>& records, double max_ratio, std::uint64_t seed);

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

// Replaces each record's split list with `rounds` independent assignments.
// val/test sizes are floor(n * fraction); train takes the remainder.
void make_splits(std::vector<TileRecord>& records, std::size_t rounds, SplitFractions fractions, std::uint64_t seed);

// Manifest: JSON lines {path, x, y, labels, splits}.
void write_manifest(const std::filesystem::path& path, const std::vector<TileRecord>& records);
std::vector<TileRecord> read_manifest(const std::filesystem::path& path);

// ---- augmentation

enum class FlipAxis { kHorizontal, kVertical };
RgbImage flip(const RgbImage& image, FlipAxis axis);

struct Hsv {
  double h = 0.0;  // [0,1), fraction of the hue circle
  double s = 0.0;
  double v = 0.0;
};
// Channels in [0,1].
Hsv rgb_to_hsv(double r, double g, double b);
std::array<double, 3> hsv_to_rgb(const Hsv& hsv);

struct HsvJitter {
  double hue_delta = 0.0;
  double sat_scale = 1.0;
  double val_scale = 1.0;
};

struct HsvBounds {
  double hue = 0.015;
  double sat_low = 0.6;
  double sat_high = 1.4;
  double val_low = 0.6;
  double val_high = 1.4;
};

HsvJitter sample_jitter(const HsvBounds& bounds, Rng& rng);
// Shift hue (wrapping), scale and clamp s/v, round back to 8 bits.
RgbImage apply_hsv(const RgbImage& image, const HsvJitter& jitter);
RgbImage random_hsv(const RgbImage& image, const HsvBounds& bounds, Rng& rng);

struct AugmentConfig {
  bool horizontal_flip = true;
  bool vertical_flip = true;
  bool hsv = true;
  HsvBounds bounds;
};

// Each flip with probability 1/2, then HSV jitter. Draws a fixed number of
// values from `rng` regardless of the outcome.
RgbImage augment(const RgbImage& image, const AugmentConfig& cfg, Rng& rng);

// ---- synthetic tissue

// Textured tile for one label: each label has its own hue and stripe/blob
// pattern. Multi-label vectors split the tile into vertical bands, one per set
// label.
RgbImage synth_tile(const LabelVector& labels, std::size_t size, Rng& rng);

// Slide of `cells` x `cells` tiles with matching masks. Cell contents cycle
// through the six combinations of the reference dataset: four single labels,
// interstitial & non_tumor, interstitial & tumor.
struct SynthSlide {
  RgbImage slide;
  RegionMasks masks;
};
SynthSlide synth_slide(std::size_t cells, std::size_t tile, std::uint64_t seed);

inline constexpr std::array<unsigned, 6> kReferenceCombinations = {
    1u << kInterstitial, 1u << kNecrosis, 1u << kNonTumor, 1u << kTumor,
    (1u << kInterstitial) | (1u << kNonTumor), (1u << kInterstitial) | (1u << kTumor)};

}  // namespace ldcsf::data

#endif  // LDCSF_DATA_HPP
