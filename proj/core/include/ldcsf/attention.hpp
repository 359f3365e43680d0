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

#ifndef LDCSF_ATTENTION_HPP
#define LDCSF_ATTENTION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ldcsf/nn.hpp"

// Windowed multi-head self-attention: window partitioning, cyclic shift,
// relative position bias and the shifted-window attention mask.
namespace ldcsf::attn {

/// Additive value placed on logits of token pairs that may not attend.
inline constexpr double kMaskValue = -1e9;

struct WindowConfig {
  std::size_t window_size = 7;
  std::size_t shift = 0;  // 0 for W-MSA, window_size / 2 for SW-MSA
  std::size_t num_heads = 1;
  std::size_t head_dim = 32;

  void validate() const;
};

// [N,H,W,C] -> [N*(H/M)*(W/M), M*M, C]; windows in row-major window order.
template <class T>
Var<T> window_partition(const Var<T>& x, std::size_t window);
// Exact inverse of window_partition.
template <class T>
Var<T> window_reverse(const Var<T>& windows, std::size_t window, std::size_t height, std::size_t width);
// Rolls rows and columns of [N,H,W,C] by -shift: out[i][j] = x[(i+s)%H][(j+s)%W].
template <class T>
Var<T> cyclic_shift(const Var<T>& x, std::size_t shift);
// Inverse roll (+shift).
template <class T>
Var<T> cyclic_unshift(const Var<T>& x, std::size_t shift);
// Zero-pads [N,H,W,C] at the bottom/right to [N,Hp,Wp,C].
template <class T>
Var<T> pad_grid(const Var<T>& x, std::size_t padded_height, std::size_t padded_width);
// Keeps the top-left [N,H,W,C] of a padded grid.
template <class T>
Var<T> crop_grid(const Var<T>& x, std::size_t height, std::size_t width);

/// Flat index into a [(2M-1)^2] table for every token pair (i, j) of an
/// M x M window, laid out [M*M, M*M].
std::vector<std::int64_t> relative_position_index(std::size_t window);

/// Additive mask [num_windows, M*M, M*M] for a grid of H x W tokens rolled by
/// `shift`: 0 for token pairs from the same pre-shift region, kMaskValue
/// otherwise. All zeros when shift == 0.
template <class T>
Tensor<T> build_shift_mask(std::size_t height, std::size_t width, std::size_t window, std::size_t shift);

/// Attention FLOP estimate for an h x w token grid: 4hwC^2 + 2M^2hwC. Counts
/// the QKV/output projections and the two score/value products only; softmax
/// is not included.
std::uint64_t wmsa_complexity(std::uint64_t h, std::uint64_t w, std::uint64_t channels, std::uint64_t window);

/// Learnable [(2M-1)^2, heads] table, expanded to [heads, M*M, M*M].
template <class T>
class RelativeBiasTable {
 public:
  RelativeBiasTable() = default;
  RelativeBiasTable(const std::string& name, std::size_t window, std::size_t heads, const Rng& rng);

  Var<T> forward(Tape<T>& tape);
  void collect(ParameterList<T>& params) { params.push_back(&table); }

  std::size_t window() const { return window_; }
  std::size_t heads() const { return heads_; }

  Parameter<T> table;

 private:
  std::size_t window_ = 0;
  std::size_t heads_ = 0;
  IndexMap expand_;
};

/// W-MSA / SW-MSA over pre-partitioned windows. Q, K and V come from one fused
/// linear of width 3C; the output projection is C -> C.
template <class T>
class WindowAttention {
 public:
  struct Output {
    Var<T> out;      // [B, M*M, C]
    Var<T> weights;  // [B*heads, M*M, M*M], post-softmax
  };

  WindowAttention() = default;
  WindowAttention(const std::string& name, std::size_t dim, std::size_t window, std::size_t heads, const Rng& rng);

  // x: [B, M*M, C]. mask, when given, is [nW, M*M, M*M] and window b uses
  // mask[b % nW].
  Output forward(Tape<T>& tape, const Var<T>& x, const Tensor<T>* mask = nullptr);
  void collect(ParameterList<T>& params);

  std::size_t dim() const { return dim_; }
  std::size_t heads() const { return heads_; }
  std::size_t head_dim() const { return dim_ / heads_; }

  nn::Linear<T> qkv;
  nn::Linear<T> proj;
  RelativeBiasTable<T> bias;

 private:
  std::size_t dim_ = 0;
  std::size_t heads_ = 1;
  std::size_t window_ = 1;
};

}  // namespace ldcsf::attn

#endif  // LDCSF_ATTENTION_HPP
