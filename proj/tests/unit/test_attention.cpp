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

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ldcsf/attention.hpp"
#include "ldcsf/ops.hpp"
#include "attention_oracle.hpp"
#include "test_util.hpp"

namespace ldcsf::attn {
namespace {

using testing::max_abs_diff;
using testing::naive_attention;
using testing::random_tensor;

void randomize(WindowAttention<double>& a, Rng& rng) {
  ParameterList<double> ps;
  a.collect(ps);
  for (auto* p : ps) {
    for (auto& v : p->value.data()) {
      v = rng.uniform(-0.7, 0.7);
    }
  }
}

Tensor<double> iota_grid(std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
  Tensor<double> t({n, h, w, c});
  for (std::size_t i = 0; i < t.numel(); ++i) {
    t[i] = static_cast<double>(i);
  }
  return t;
}

TEST(WindowPartition, SingleWindowKeepsContents) {
  Tape<double> tape;
  const auto x = iota_grid(1, 2, 2, 3);
  EXPECT_EQ(window_partition(tape.constant(x), 2).value(), x.reshaped({1, 4, 3}));
}

TEST(WindowPartition, FourByFourIntoFourWindows) {
  Tape<double> tape;
  const auto w = window_partition(tape.constant(iota_grid(1, 4, 4, 1)), 2).value();
  EXPECT_EQ(w.shape(), (Shape{4, 4, 1}));
  // window 0 holds rows 0-1 x cols 0-1
  EXPECT_EQ(std::vector<double>(w.data().begin(), w.data().begin() + 4), (std::vector<double>{0, 1, 4, 5}));
  // window 1 is the top-right block
  EXPECT_EQ(std::vector<double>(w.data().begin() + 4, w.data().begin() + 8), (std::vector<double>{2, 3, 6, 7}));
}

TEST(WindowPartition, RejectsNonDivisibleGrid) {
  Tape<double> tape;
  EXPECT_THROW(window_partition(tape.constant(iota_grid(1, 5, 4, 1)), 2), ShapeError);
}

TEST(WindowReverse, RoundTripIsExact) {
  Rng rng(1);
  Tape<double> tape;
  const auto x = random_tensor<double>({2, 6, 4, 3}, rng);
  EXPECT_EQ(window_reverse(window_partition(tape.constant(x), 2), 2, 6, 4).value(), x);
  EXPECT_THROW(window_reverse(window_partition(tape.constant(x), 2), 2, 8, 8), ShapeError);
}

TEST(WindowReverse, PermutedWindowsDoNotRoundTrip) {
  Tape<double> tape;
  const auto x = iota_grid(1, 4, 4, 2);
  auto w = window_partition(tape.constant(x), 2).value();
  // swap windows 0 and 3
  const std::size_t block = 4 * 2;
  std::swap_ranges(w.data().begin(), w.data().begin() + block, w.data().begin() + 3 * block);
  EXPECT_NE(window_reverse(tape.constant(w), 2, 4, 4).value(), x);
}

TEST(CyclicShift, ZeroIsIdentity) {
  Tape<double> tape;
  const auto x = iota_grid(1, 4, 4, 1);
  EXPECT_EQ(cyclic_shift(tape.constant(x), 0).value(), x);
}

TEST(CyclicShift, RollsTowardTheFront) {
  Tape<double> tape;
  Tensor<double> x({1, 4, 4, 1});
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      x[i * 4 + j] = static_cast<double>(j);
    }
  }
  const auto y = cyclic_shift(tape.constant(x), 1).value();
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().begin() + 4), (std::vector<double>{1, 2, 3, 0}));
  const auto z = cyclic_shift(tape.constant(iota_grid(1, 4, 4, 1)), 1).value();
  EXPECT_EQ(z[0], 5.0);  // out[0][0] = x[1][1]
}

TEST(CyclicShift, UnshiftInverts) {
  Rng rng(2);
  Tape<double> tape;
  const auto x = random_tensor<double>({2, 6, 6, 3}, rng);
  for (std::size_t s = 0; s < 6; ++s) {
    EXPECT_EQ(cyclic_unshift(cyclic_shift(tape.constant(x), s), s).value(), x);
  }
}

TEST(PadCrop, PadThenCropIsIdentity) {
  Rng rng(3);
  Tape<double> tape;
  const auto x = random_tensor<double>({1, 3, 5, 2}, rng);
  const auto p = pad_grid(tape.constant(x), 4, 6);
  EXPECT_EQ(p.shape(), (Shape{1, 4, 6, 2}));
  EXPECT_EQ(p.value()[(3 * 6 + 5) * 2], 0.0);
  EXPECT_EQ(crop_grid(p, 3, 5).value(), x);
}

TEST(RelativePositionIndex, RangeAndAntisymmetry) {
  for (std::size_t m : {1u, 2u, 3u, 7u}) {
    const auto idx = relative_position_index(m);
    const std::size_t t = m * m;
    const std::int64_t side = 2 * static_cast<std::int64_t>(m) - 1;
    const std::int64_t centre = (side * side - 1) / 2;
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        ASSERT_GE(idx[i * t + j], 0);
        ASSERT_LT(idx[i * t + j], side * side);
        // negated offsets mirror through the centre entry
        ASSERT_EQ(idx[i * t + j] + idx[j * t + i], 2 * centre);
      }
      ASSERT_EQ(idx[i * t + i], centre);
    }
  }
}

TEST(RelativePositionIndex, DependsOnlyOnOffset) {
  const auto idx = relative_position_index(3);
  // (0,0)->(1,1) and (1,1)->(2,2) share the offset
  EXPECT_EQ(idx[0 * 9 + 4], idx[4 * 9 + 8]);
  EXPECT_NE(idx[0 * 9 + 4], idx[0 * 9 + 5]);
}

TEST(WindowAttention, MatchesNaiveOracle) {
  Rng rng(4);
  WindowAttention<double> a("attn", 4, 2, 1, rng);
  randomize(a, rng);
  const auto x = random_tensor<double>({3, 4, 4}, rng);
  Tape<double> tape;
  const auto y = a.forward(tape, tape.constant(x)).out.value();
  EXPECT_LE(max_abs_diff(y, naive_attention(a, x, nullptr, 2)), 1e-6);
}

TEST(WindowAttention, MultiHeadMatchesNaiveOracle) {
  Rng rng(5);
  WindowAttention<double> a("attn", 6, 3, 3, rng);
  randomize(a, rng);
  const auto x = random_tensor<double>({2, 9, 6}, rng);
  Tape<double> tape;
  EXPECT_LE(max_abs_diff(a.forward(tape, tape.constant(x)).out.value(), naive_attention(a, x, nullptr, 3)), 1e-12);
}

TEST(WindowAttention, SingleTokenWindowIsProjectedValue) {
  Rng rng(6);
  WindowAttention<double> a("attn", 4, 1, 2, rng);
  randomize(a, rng);
  const auto x = random_tensor<double>({2, 1, 4}, rng);
  Tape<double> tape;
  const auto y = a.forward(tape, tape.constant(x)).out.value();
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t o = 0; o < 4; ++o) {
      double v_then_proj = a.proj.bias->value[o];
      for (std::size_t i = 0; i < 4; ++i) {
        double v = a.qkv.bias->value[8 + i];
        for (std::size_t k = 0; k < 4; ++k) {
          v += a.qkv.weight.value[(8 + i) * 4 + k] * x[b * 4 + k];
        }
        v_then_proj += a.proj.weight.value[o * 4 + i] * v;
      }
      EXPECT_NEAR(y[b * 4 + o], v_then_proj, 1e-12);
    }
  }
}

TEST(WindowAttention, IdenticalTokensGiveUniformWeights) {
  Rng rng(7);
  WindowAttention<double> a("attn", 4, 2, 1, rng);
  randomize(a, rng);
  for (auto& v : a.bias.table.value.data()) {
    v = 0.0;
  }
  Tensor<double> x({1, 4, 4});
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t c = 0; c < 4; ++c) {
      x[t * 4 + c] = 0.1 * static_cast<double>(c + 1);
    }
  }
  Tape<double> tape;
  for (double w : a.forward(tape, tape.constant(x)).weights.value().data()) {
    EXPECT_NEAR(w, 0.25, 1e-15);
  }
}

TEST(WindowAttention, RejectsIndivisibleHeads) {
  Rng rng(8);
  EXPECT_THROW(WindowAttention<double>("attn", 6, 2, 4, rng), ConfigError);
}

TEST(WindowAttention, ZeroMaskPathIsBitIdentical) {
  Rng rng(9);
  WindowAttention<double> a("attn", 4, 2, 2, rng);
  randomize(a, rng);
  const auto x = random_tensor<double>({4, 4, 4}, rng);
  const auto zero = build_shift_mask<double>(4, 4, 2, 0);
  Tape<double> tape;
  EXPECT_EQ(a.forward(tape, tape.constant(x)).out.value(), a.forward(tape, tape.constant(x), &zero).out.value());
}

TEST(WindowAttention, KeyOffsetLeavesWeightsUnchanged) {
  // q.(k_j + u) = q.k_j + q.u is constant along a softmax row
  Rng rng(10);
  WindowAttention<double> a("attn", 4, 2, 2, rng);
  randomize(a, rng);
  const auto x = random_tensor<double>({2, 4, 4}, rng);
  Tape<double> t1;
  const auto w1 = a.forward(t1, t1.constant(x)).weights.value();
  for (std::size_t i = 0; i < 4; ++i) {
    a.qkv.bias->value[4 + i] += rng.uniform(-3, 3);
  }
  Tape<double> t2;
  const auto w2 = a.forward(t2, t2.constant(x)).weights.value();
  EXPECT_LE(max_abs_diff(w1, w2), 1e-12);
}

TEST(WindowAttention, MaskedWeightRowsSumToOne) {
  Rng rng(11);
  WindowAttention<double> a("attn", 4, 2, 2, rng);
  randomize(a, rng);
  const auto mask = build_shift_mask<double>(4, 4, 2, 1);
  const auto x = random_tensor<double>({4, 4, 4}, rng);
  Tape<double> tape;
  const auto w = a.forward(tape, tape.constant(x), &mask).weights.value();
  for (std::size_t r = 0; r < w.numel() / 4; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      s += w[r * 4 + j];
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(ShiftMask, ZeroShiftIsAllZero) {
  const auto mask = build_shift_mask<double>(8, 8, 4, 0);
  for (double v : mask.data()) {
    EXPECT_EQ(v, 0.0);
  }
}

// Groups of tokens that may attend to each other inside one window.
std::vector<std::set<std::size_t>> regions_of(const Tensor<double>& mask, std::size_t win) {
  const std::size_t t = mask.dim(1);
  std::vector<std::set<std::size_t>> groups;
  std::vector<bool> seen(t, false);
  for (std::size_t i = 0; i < t; ++i) {
    if (seen[i]) {
      continue;
    }
    std::set<std::size_t> g;
    for (std::size_t j = 0; j < t; ++j) {
      if (mask[(win * t + i) * t + j] == 0.0) {
        g.insert(j);
        seen[j] = true;
      }
    }
    groups.push_back(g);
  }
  return groups;
}

TEST(ShiftMask, HandLabeledFourByFour) {
  // Rolled 4x4 grid, M=2, s=1. Row/col bands: {0,1}, {2}, {3}; the seam sits
  // between rolled rows/cols 2 and 3.
  const auto mask = build_shift_mask<double>(4, 4, 2, 1);
  ASSERT_EQ(mask.shape(), (Shape{4, 4, 4}));
  for (double v : mask.data()) {
    EXPECT_TRUE(v == 0.0 || v == kMaskValue);
  }
  for (std::size_t w = 0; w < 4; ++w) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_EQ(mask[(w * 4 + i) * 4 + j], mask[(w * 4 + j) * 4 + i]);
      }
    }
  }
  EXPECT_EQ(regions_of(mask, 0).size(), 1u);  // away from the seam
  // windows crossed by one seam: tokens split by column (top-right) or row
  // (bottom-left)
  EXPECT_EQ(regions_of(mask, 1), (std::vector<std::set<std::size_t>>{{0, 2}, {1, 3}}));
  EXPECT_EQ(regions_of(mask, 2), (std::vector<std::set<std::size_t>>{{0, 1}, {2, 3}}));
  // the corner window is crossed by both seams
  EXPECT_EQ(regions_of(mask, 3).size(), 4u);
}

TEST(ShiftMask, MaskedAttentionEqualsPerRegionAttention) {
  Rng rng(12);
  WindowAttention<double> a("attn", 4, 2, 1, rng);
  randomize(a, rng);
  const auto mask = build_shift_mask<double>(4, 4, 2, 1);
  const auto x = random_tensor<double>({4, 4, 4}, rng);
  Tape<double> tape;
  const auto y = a.forward(tape, tape.constant(x), &mask).out.value();
  const auto rel = relative_position_index(2);
  for (std::size_t w = 0; w < 4; ++w) {
    for (const auto& region : regions_of(mask, w)) {
      // plain attention over the region's tokens only
      for (std::size_t i : region) {
        std::vector<double> q(4), o(4, 0.0);
        auto proj_row = [&](std::size_t t, std::size_t part, std::size_t e) {
          double s = a.qkv.bias->value[part * 4 + e];
          for (std::size_t k = 0; k < 4; ++k) {
            s += a.qkv.weight.value[(part * 4 + e) * 4 + k] * x[(w * 4 + t) * 4 + k];
          }
          return s;
        };
        std::vector<double> s;
        std::vector<std::size_t> keys(region.begin(), region.end());
        double mx = -1e300;
        for (std::size_t j : keys) {
          double dot = 0.0;
          for (std::size_t e = 0; e < 4; ++e) {
            dot += proj_row(i, 0, e) * proj_row(j, 1, e);
          }
          s.push_back(dot / 2.0 + a.bias.table.value[rel[i * 4 + j]]);
          mx = std::max(mx, s.back());
        }
        double z = 0.0;
        for (auto& v : s) {
          v = std::exp(v - mx);
          z += v;
        }
        std::vector<double> mixed(4, 0.0);
        for (std::size_t k = 0; k < keys.size(); ++k) {
          for (std::size_t e = 0; e < 4; ++e) {
            mixed[e] += s[k] / z * proj_row(keys[k], 2, e);
          }
        }
        for (std::size_t oo = 0; oo < 4; ++oo) {
          double v = a.proj.bias->value[oo];
          for (std::size_t e = 0; e < 4; ++e) {
            v += a.proj.weight.value[oo * 4 + e] * mixed[e];
          }
          EXPECT_NEAR(y[(w * 4 + i) * 4 + oo], v, 1e-9) << "window " << w << " token " << i;
        }
      }
    }
  }
}

TEST(ShiftMask, MaskedAttentionMatchesHandLabeledOracle) {
  // Region ids per token of each window on the rolled 4x4 grid, M=2, s=1.
  const std::vector<std::vector<int>> regions = {{0, 0, 0, 0}, {0, 1, 0, 1}, {0, 0, 1, 1}, {0, 1, 2, 3}};
  Rng rng(13);
  WindowAttention<double> a("attn", 4, 2, 1, rng);
  randomize(a, rng);
  const auto mask = build_shift_mask<double>(4, 4, 2, 1);
  const auto x = random_tensor<double>({8, 4, 4}, rng);
  Tape<double> tape;
  const auto y = a.forward(tape, tape.constant(x), &mask).out.value();
  EXPECT_LE(max_abs_diff(y, naive_attention(a, x, nullptr, 2, &regions)), 1e-9);
}

TEST(Complexity, HandValues) {
  EXPECT_EQ(wmsa_complexity(1, 1, 1, 1), 6u);
  EXPECT_EQ(wmsa_complexity(7, 7, 8, 7), 50960u);
  EXPECT_EQ(wmsa_complexity(56, 56, 96, 7), 145108992u);
}

TEST(Complexity, LinearInTokenCount) {
  for (std::uint64_t h : {7u, 14u, 56u}) {
    for (std::uint64_t c : {8u, 96u}) {
      EXPECT_EQ(wmsa_complexity(2 * h, h, c, 7), 2 * wmsa_complexity(h, h, c, 7));
      EXPECT_EQ(wmsa_complexity(h, 2 * h, c, 7), 2 * wmsa_complexity(h, h, c, 7));
    }
  }
}

TEST(WindowConfig, Validation) {
  EXPECT_NO_THROW((WindowConfig{7, 3, 3, 32}.validate()));
  EXPECT_THROW((WindowConfig{7, 7, 3, 32}.validate()), ConfigError);
  EXPECT_THROW((WindowConfig{0, 0, 1, 1}.validate()), ConfigError);
}

}  // namespace
}  // namespace ldcsf::attn
