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

#ifndef LDCSF_LABELS_HPP
#define LDCSF_LABELS_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ldcsf {

inline constexpr std::size_t kNumLabels = 4;

// Slot order of every multi-hot vector, logit row and mask list.
enum Label : std::size_t { kInterstitial = 0, kNecrosis = 1, kNonTumor = 2, kTumor = 3 };

inline constexpr std::array<std::string_view, kNumLabels> kLabelNames = {"interstitial_area", "necrosis",
                                                                          "non_tumor", "tumor"};

inline std::optional<std::size_t> label_index(std::string_view name) {
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if (kLabelNames[i] == name) {
      return i;
    }
  }
  return std::nullopt;
}

/// Multi-hot vector over the four labels.
struct LabelVector {
  std::array<std::uint8_t, kNumLabels> bits{};

  bool any() const { return bits[0] || bits[1] || bits[2] || bits[3]; }
  // Bitmask with bit i set for label i; identifies a label combination.
  unsigned mask() const {
    unsigned m = 0;
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      m |= (bits[i] ? 1u : 0u) << i;
    }
    return m;
  }
  static LabelVector from_mask(unsigned m) {
    LabelVector v;
    for (std::size_t i = 0; i < kNumLabels; ++i) {
      v.bits[i] = static_cast<std::uint8_t>((m >> i) & 1u);
    }
    return v;
  }
  friend bool operator==(const LabelVector&, const LabelVector&) = default;
};

// "interstitial_area & tumor" style name of a label combination.
inline std::string combination_name(unsigned mask) {
  std::string out;
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if ((mask >> i) & 1u) {
      out += (out.empty() ? "" : " & ") + std::string(kLabelNames[i]);
    }
  }
  return out.empty() ? "none" : out;
}

}  // namespace ldcsf

#endif  // LDCSF_LABELS_HPP
