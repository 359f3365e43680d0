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

#include "ldcsf/attention.hpp"

#include <cmath>

namespace ldcsf::attn {
namespace {

struct Grid {
  std::size_t n, h, w, c;
};

Grid grid_of(const Shape& shape, const char* op) {
  if (shape.size() != 4) {
    throw ShapeError(std::string(op) + ": expected [N,H,W,C], got " + shape_str(shape));
  }
  return {shape[0], shape[1], shape[2], shape[3]};
}

std::shared_ptr<std::vector<std::int64_t>> make_index(std::size_t size) {
  return std::make_shared<std::vector<std::int64_t>>(size);
}

// Index map for a roll of the H and W axes: out[i][j] = x[(i+d)%H][(j+d)%W].
IndexMap roll_index(const Grid& g, std::size_t delta_h, std::size_t delta_w) {
  auto index = make_index(g.n * g.h * g.w * g.c);
  std::size_t out = 0;
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t i = 0; i < g.h; ++i) {
      const std::size_t si = (i + delta_h) % g.h;
      for (std::size_t j = 0; j < g.w; ++j) {
        const std::size_t sj = (j + delta_w) % g.w;
        const std::size_t src = ((b * g.h + si) * g.w + sj) * g.c;
        for (std::size_t ch = 0; ch < g.c; ++ch) {
          (*index)[out++] = static_cast<std::int64_t>(src + ch);
        }
      }
    }
  }
  return index;
}

}  // namespace

void WindowConfig::validate() const {
  if (window_size == 0) {
    throw ConfigError("window_size must be positive");
  }
  if (shift >= window_size) {
    throw ConfigError("shift must be smaller than window_size");
  }
  if (num_heads == 0 || head_dim == 0) {
    throw ConfigError("num_heads and head_dim must be positive");
  }
}

template <class T>
Var<T> window_partition(const Var<T>& x, std::size_t window) {
  const Grid g = grid_of(x.shape(), "window_partition");
  if (window == 0 || g.h % window != 0 || g.w % window != 0) {
    throw ShapeError("window_partition: window " + std::to_string(window) + " does not divide grid " +
                     shape_str(x.shape()));
  }
  const std::size_t nh = g.h / window;
  const std::size_t nw = g.w / window;
  auto index = make_index(x.numel());
  std::size_t out = 0;
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t wy = 0; wy < nh; ++wy) {
      for (std::size_t wx = 0; wx < nw; ++wx) {
        for (std::size_t ty = 0; ty < window; ++ty) {
          for (std::size_t tx = 0; tx < window; ++tx) {
            const std::size_t src = ((b * g.h + wy * window + ty) * g.w + wx * window + tx) * g.c;
            for (std::size_t ch = 0; ch < g.c; ++ch) {
              (*index)[out++] = static_cast<std::int64_t>(src + ch);
            }
          }
        }
      }
    }
  }
  return gather(x, index, {g.n * nh * nw, window * window, g.c});
}

template <class T>
Var<T> window_reverse(const Var<T>& windows, std::size_t window, std::size_t height, std::size_t width) {
  const Shape& s = windows.shape();
  if (s.size() != 3 || window == 0 || s[1] != window * window || height % window != 0 || width % window != 0) {
    throw ShapeError("window_reverse: inconsistent window tensor " + shape_str(s));
  }
  const std::size_t nh = height / window;
  const std::size_t nw = width / window;
  if (s[0] % (nh * nw) != 0) {
    throw ShapeError("window_reverse: window count " + std::to_string(s[0]) + " inconsistent with grid " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t n = s[0] / (nh * nw);
  const std::size_t c = s[2];
  auto index = make_index(windows.numel());
  std::size_t out = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t win = (b * nh + y / window) * nw + x / window;
        const std::size_t token = (y % window) * window + x % window;
        const std::size_t src = (win * window * window + token) * c;
        for (std::size_t ch = 0; ch < c; ++ch) {
          (*index)[out++] = static_cast<std::int64_t>(src + ch);
        }
      }
    }
  }
  return gather(windows, index, {n, height, width, c});
}

template <class T>
Var<T> cyclic_shift(const Var<T>& x, std::size_t shift) {
  const Grid g = grid_of(x.shape(), "cyclic_shift");
  if (shift == 0) {
    return x;
  }
  if (shift >= std::min(g.h, g.w)) {
    throw ShapeError("cyclic_shift: shift must be smaller than the grid side");
  }
  return gather(x, roll_index(g, shift, shift), x.shape());
}

template <class T>
Var<T> cyclic_unshift(const Var<T>& x, std::size_t shift) {
  const Grid g = grid_of(x.shape(), "cyclic_unshift");
  if (shift == 0) {
    return x;
  }
  if (shift >= std::min(g.h, g.w)) {
    throw ShapeError("cyclic_unshift: shift must be smaller than the grid side");
  }
  return gather(x, roll_index(g, g.h - shift, g.w - shift), x.shape());
}

template <class T>
Var<T> pad_grid(const Var<T>& x, std::size_t padded_height, std::size_t padded_width) {
  const Grid g = grid_of(x.shape(), "pad_grid");
  if (padded_height < g.h || padded_width < g.w) {
    throw ShapeError("pad_grid: target smaller than input");
  }
  if (padded_height == g.h && padded_width == g.w) {
    return x;
  }
  auto index = make_index(g.n * padded_height * padded_width * g.c);
  std::size_t out = 0;
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t i = 0; i < padded_height; ++i) {
      for (std::size_t j = 0; j < padded_width; ++j) {
        const bool inside = i < g.h && j < g.w;
        const std::size_t src = ((b * g.h + i) * g.w + j) * g.c;
        for (std::size_t ch = 0; ch < g.c; ++ch) {
          (*index)[out++] = inside ? static_cast<std::int64_t>(src + ch) : -1;
        }
      }
    }
  }
  return gather(x, index, {g.n, padded_height, padded_width, g.c});
}

template <class T>
Var<T> crop_grid(const Var<T>& x, std::size_t height, std::size_t width) {
  const Grid g = grid_of(x.shape(), "crop_grid");
  if (height > g.h || width > g.w) {
    throw ShapeError("crop_grid: target larger than input");
  }
  if (height == g.h && width == g.w) {
    return x;
  }
  auto index = make_index(g.n * height * width * g.c);
  std::size_t out = 0;
  for (std::size_t b = 0; b < g.n; ++b) {
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t src = ((b * g.h + i) * g.w + j) * g.c;
        for (std::size_t ch = 0; ch < g.c; ++ch) {
          (*index)[out++] = static_cast<std::int64_t>(src + ch);
        }
      }
    }
  }
  return gather(x, index, {g.n, height, width, g.c});
}

std::vector<std::int64_t> relative_position_index(std::size_t window) {
  const std::size_t tokens = window * window;
  const std::size_t side = 2 * window - 1;
  std::vector<std::int64_t> index(tokens * tokens);
  for (std::size_t i = 0; i < tokens; ++i) {
    for (std::size_t j = 0; j < tokens; ++j) {
      const std::size_t dy = i / window + window - 1 - j / window;
      const std::size_t dx = i % window + window - 1 - j % window;
      index[i * tokens + j] = static_cast<std::int64_t>(dy * side + dx);
    }
  }
  return index;
}

template <class T>
Tensor<T> build_shift_mask(std::size_t height, std::size_t width, std::size_t window, std::size_t shift) {
  if (window == 0 || height % window != 0 || width % window != 0) {
    throw ShapeError("build_shift_mask: window must divide the grid");
  }
  if (shift >= window) {
    throw ShapeError("build_shift_mask: shift must be smaller than the window");
  }
  const std::size_t tokens = window * window;
  const std::size_t nh = height / window;
  const std::size_t nw = width / window;
  Tensor<T> mask({nh * nw, tokens, tokens});
  if (shift == 0) {
    return mask;
  }
  // Region id per rolled-grid position: rows/cols split at side-M and side-s.
  auto band = [window, shift](std::size_t pos, std::size_t side) -> std::size_t {
    if (pos < side - window) {
      return 0;
    }
    return pos < side - shift ? 1 : 2;
  };
  std::vector<std::size_t> region(height * width);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      region[i * width + j] = band(i, height) * 3 + band(j, width);
    }
  }
  for (std::size_t wy = 0; wy < nh; ++wy) {
    for (std::size_t wx = 0; wx < nw; ++wx) {
      const std::size_t win = wy * nw + wx;
      for (std::size_t a = 0; a < tokens; ++a) {
        const std::size_t ra = region[(wy * window + a / window) * width + wx * window + a % window];
        for (std::size_t b = 0; b < tokens; ++b) {
          const std::size_t rb = region[(wy * window + b / window) * width + wx * window + b % window];
          mask[(win * tokens + a) * tokens + b] = ra == rb ? T(0) : static_cast<T>(kMaskValue);
        }
      }
    }
  }
  return mask;
}

std::uint64_t wmsa_complexity(std::uint64_t h, std::uint64_t w, std::uint64_t channels, std::uint64_t window) {
  const std::uint64_t hw = h * w;
  return 4 * hw * channels * channels + 2 * window * window * hw * channels;
}

template <class T>
RelativeBiasTable<T>::RelativeBiasTable(const std::string& name, std::size_t window, std::size_t heads,
                                        const Rng& rng)
    : table(name + ".table",
            nn::trunc_normal<T>({(2 * window - 1) * (2 * window - 1), heads}, 0.02, rng, name + ".table")),
      window_(window),
      heads_(heads) {
  const auto rel = relative_position_index(window);
  const std::size_t tokens = window * window;
  auto index = make_index(heads * tokens * tokens);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t p = 0; p < tokens * tokens; ++p) {
      (*index)[h * tokens * tokens + p] = rel[p] * static_cast<std::int64_t>(heads) + static_cast<std::int64_t>(h);
    }
  }
  expand_ = index;
}

template <class T>
Var<T> RelativeBiasTable<T>::forward(Tape<T>& tape) {
  const std::size_t tokens = window_ * window_;
  return gather(tape.param(table), expand_, {heads_, tokens, tokens});
}

template <class T>
WindowAttention<T>::WindowAttention(const std::string& name, std::size_t dim, std::size_t window, std::size_t heads,
                                    const Rng& rng)
    : qkv(name + ".qkv", dim, 3 * dim, true, rng),
      proj(name + ".proj", dim, dim, true, rng),
      bias(name + ".relative_position_bias", window, heads, rng),
      dim_(dim),
      heads_(heads),
      window_(window) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("window attention: dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
}

template <class T>
typename WindowAttention<T>::Output WindowAttention<T>::forward(Tape<T>& tape, const Var<T>& x, const Tensor<T>* mask) {
  const std::size_t tokens = window_ * window_;
  if (x.shape().size() != 3 || x.dim(1) != tokens || x.dim(2) != dim_) {
    throw ShapeError("window attention: expected [B," + std::to_string(tokens) + "," + std::to_string(dim_) +
                     "], got " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t hd = dim_ / heads_;
  const std::size_t groups = batch * heads_;

  // Split the fused projection into per-head [B*heads, L, d] blocks.
  const Var<T> fused = qkv.forward(tape, x);
  auto head_index = [&](std::size_t part) {
    auto index = make_index(groups * tokens * hd);
    std::size_t out = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < heads_; ++h) {
        for (std::size_t t = 0; t < tokens; ++t) {
          const std::size_t src = (b * tokens + t) * 3 * dim_ + part * dim_ + h * hd;
          for (std::size_t e = 0; e < hd; ++e) {
            (*index)[out++] = static_cast<std::int64_t>(src + e);
          }
        }
      }
    }
    return index;
  };
  const Var<T> q = gather(fused, head_index(0), {groups, tokens, hd});
  const Var<T> k = gather(fused, head_index(1), {groups, tokens, hd});
  const Var<T> v = gather(fused, head_index(2), {groups, tokens, hd});

  Var<T> scores = scale(bmm(q, k, true), T(1) / std::sqrt(static_cast<T>(hd)));
  scores = add_tiled(scores, bias.forward(tape));
  if (mask != nullptr) {
    const std::size_t block = tokens * tokens;
    if (mask->rank() != 3 || mask->dim(1) != tokens || mask->dim(2) != tokens || batch % mask->dim(0) != 0) {
      throw ShapeError("window attention: mask " + shape_str(mask->shape()) + " incompatible with " +
                       std::to_string(batch) + " windows");
    }
    const std::size_t windows_per_image = mask->dim(0);
    Tensor<T> expanded({groups, tokens, tokens});
    for (std::size_t b = 0; b < batch; ++b) {
      const T* src = mask->data().data() + (b % windows_per_image) * block;
      for (std::size_t h = 0; h < heads_; ++h) {
        std::copy(src, src + block, expanded.data().data() + (b * heads_ + h) * block);
      }
    }
    scores = add(scores, tape.constant(std::move(expanded)));
  }
  const Var<T> weights = softmax_last_dim(scores);
  const Var<T> mixed = bmm(weights, v);

  auto merge = make_index(batch * tokens * dim_);
  std::size_t out = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < tokens; ++t) {
      for (std::size_t h = 0; h < heads_; ++h) {
        const std::size_t src = ((b * heads_ + h) * tokens + t) * hd;
        for (std::size_t e = 0; e < hd; ++e) {
          (*merge)[out++] = static_cast<std::int64_t>(src + e);
        }
      }
    }
  }
  const Var<T> merged = gather(mixed, merge, {batch, tokens, dim_});
  return Output{proj.forward(tape, merged), weights};
}

template <class T>
void WindowAttention<T>::collect(ParameterList<T>& params) {
  qkv.collect(params);
  proj.collect(params);
  bias.collect(params);
}

#define LDCSF_INSTANTIATE_ATTN(T)                                                                     \
  template Var<T> window_partition(const Var<T>&, std::size_t);                                       \
  template Var<T> window_reverse(const Var<T>&, std::size_t, std::size_t, std::size_t);               \
  template Var<T> cyclic_shift(const Var<T>&, std::size_t);                                           \
  template Var<T> cyclic_unshift(const Var<T>&, std::size_t);                                         \
  template Var<T> pad_grid(const Var<T>&, std::size_t, std::size_t);                                  \
  template Var<T> crop_grid(const Var<T>&, std::size_t, std::size_t);                                 \
  template Tensor<T> build_shift_mask<T>(std::size_t, std::size_t, std::size_t, std::size_t);          \
  template class RelativeBiasTable<T>;                                                                \
  template class WindowAttention<T>;

LDCSF_INSTANTIATE_ATTN(float)
LDCSF_INSTANTIATE_ATTN(double)

}  // namespace ldcsf::attn
