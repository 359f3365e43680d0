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

#include "ldcsf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ldcsf::nn {
namespace {

void require_rank(const Shape& shape, std::size_t rank, const char* op) {
  if (shape.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(shape));
  }
}

// Unary elementwise op with derivative computed from the input value.
template <class T, class Fwd, class Deriv>
Var<T> unary(const Var<T>& x, Fwd fwd, Deriv deriv, const char* name) {
  Tensor<T> out(x.shape());
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = fwd(xv[i]);
  }
  return x.tape()->record(
      std::move(out), {x},
      [deriv](const BackwardArgs<T>& args) {
        const auto xv = args.inputs[0]->data();
        const auto go = args.grad_output.data();
        auto gx = args.grad_inputs[0]->data();
        for (std::size_t i = 0; i < gx.size(); ++i) {
          gx[i] += go[i] * deriv(xv[i]);
        }
      },
      name);
}

// Unfolds one image [C,H,W] into columns [C*k*k, H*W] for a same-size
// stride-1 convolution with the given padding.
template <class T>
void im2col(const T* img, std::size_t channels, std::size_t height, std::size_t width, std::size_t kernel,
            std::size_t padding, T* col) {
  const std::size_t hw = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kernel; ++ky) {
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        T* row = col + ((c * kernel + ky) * kernel + kx) * hw;
        for (std::size_t y = 0; y < height; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(padding);
          for (std::size_t x = 0; x < width; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(padding);
            const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(height) &&
                                sx < static_cast<std::ptrdiff_t>(width);
            row[y * width + x] = inside ? img[(c * height + static_cast<std::size_t>(sy)) * width +
                                              static_cast<std::size_t>(sx)]
                                        : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, std::size_t channels, std::size_t height, std::size_t width, std::size_t kernel,
                std::size_t padding, T* img) {
  const std::size_t hw = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kernel; ++ky) {
      for (std::size_t kx = 0; kx < kernel; ++kx) {
        const T* row = col + ((c * kernel + ky) * kernel + kx) * hw;
        for (std::size_t y = 0; y < height; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(padding);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) {
            continue;
          }
          for (std::size_t x = 0; x < width; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(padding);
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(width)) {
              continue;
            }
            img[(c * height + static_cast<std::size_t>(sy)) * width + static_cast<std::size_t>(sx)] +=
                row[y * width + x];
          }
        }
      }
    }
  }
}

}  // namespace

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias) {
  require_rank(weight.shape(), 2, "linear weight");
  const std::size_t out_f = weight.dim(0);
  const std::size_t in_f = weight.dim(1);
  if (x.shape().empty() || x.shape().back() != in_f) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not end in " + std::to_string(in_f));
  }
  if (bias && bias->numel() != out_f) {
    throw ShapeError("linear: bias length mismatch");
  }
  const std::size_t rows = x.numel() / in_f;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  Tensor<T> out(out_shape);
  detail::gemm(false, true, rows, out_f, in_f, x.value().data().data(), weight.value().data().data(),
               out.data().data(), false);
  std::vector<Var<T>> inputs{x, weight};
  if (bias) {
    const auto bv = bias->value().data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < out_f; ++j) {
        out[r * out_f + j] += bv[j];
      }
    }
    inputs.push_back(*bias);
  }
  return x.tape()->record(
      std::move(out), std::move(inputs),
      [rows, in_f, out_f](const BackwardArgs<T>& args) {
        const T* go = args.grad_output.data().data();
        if (auto* gx = args.grad_inputs[0]) {
          detail::gemm(false, false, rows, in_f, out_f, go, args.inputs[1]->data().data(), gx->data().data(), true);
        }
        if (auto* gw = args.grad_inputs[1]) {
          detail::gemm(true, false, out_f, in_f, rows, go, args.inputs[0]->data().data(), gw->data().data(), true);
        }
        if (args.grad_inputs.size() > 2 && args.grad_inputs[2] != nullptr) {
          auto gb = args.grad_inputs[2]->data();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < out_f; ++j) {
              gb[j] += go[r * out_f + j];
            }
          }
        }
      },
      "linear");
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return unary<T>(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v) { return v > T(0) ? T(1) : T(0); }, "relu");
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out(x.shape());
  const auto xv = x.value().data();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = xv[i] >= T(0) ? T(1) / (T(1) + std::exp(-xv[i])) : std::exp(xv[i]) / (T(1) + std::exp(xv[i]));
  }
  return x.tape()->record(
      std::move(out), {x},
      [](const BackwardArgs<T>& args) {
        const auto y = args.output.data();
        const auto go = args.grad_output.data();
        auto gx = args.grad_inputs[0]->data();
        for (std::size_t i = 0; i < gx.size(); ++i) {
          gx[i] += go[i] * y[i] * (T(1) - y[i]);
        }
      },
      "sigmoid");
}

template <class T>
Var<T> gelu(const Var<T>& x) {
  constexpr T kAlpha = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kCubic = T(0.044715);
  return unary<T>(
      x,
      [](T v) { return T(0.5) * v * (T(1) + std::tanh(kAlpha * (v + kCubic * v * v * v))); },
      [](T v) {
        const T t = std::tanh(kAlpha * (v + kCubic * v * v * v));
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * kAlpha * (T(1) + T(3) * kCubic * v * v);
      },
      "gelu");
}

template <class T>
Var<T> h_swish(const Var<T>& x) {
  return unary<T>(
      x, [](T v) { return v * std::clamp(v + T(3), T(0), T(6)) / T(6); },
      [](T v) {
        if (v <= T(-3)) {
          return T(0);
        }
        if (v >= T(3)) {
          return T(1);
        }
        return (T(2) * v + T(3)) / T(6);
      },
      "h_swish");
}

template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  if (x.shape().empty()) {
    throw ShapeError("layer_norm: scalar input");
  }
  const std::size_t width = x.shape().back();
  if (gamma.numel() != width || beta.numel() != width) {
    throw ShapeError("layer_norm: affine parameters do not match width " + std::to_string(width));
  }
  const std::size_t rows = x.numel() / width;
  const auto xv = x.value().data();
  const auto gv = gamma.value().data();
  const auto bv = beta.value().data();
  Tensor<T> out(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * width;
    T mu = T(0);
    for (std::size_t j = 0; j < width; ++j) {
      mu += in[j];
    }
    mu /= static_cast<T>(width);
    T var = T(0);
    for (std::size_t j = 0; j < width; ++j) {
      var += (in[j] - mu) * (in[j] - mu);
    }
    var /= static_cast<T>(width);
    const T istd = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = istd;
    for (std::size_t j = 0; j < width; ++j) {
      const T h = (in[j] - mu) * istd;
      (*xhat)[r * width + j] = h;
      out[r * width + j] = h * gv[j] + bv[j];
    }
  }
  return x.tape()->record(
      std::move(out), {x, gamma, beta},
      [rows, width, xhat, inv_std](const BackwardArgs<T>& args) {
        const auto go = args.grad_output.data();
        const auto gv = args.inputs[1]->data();
        auto* gx = args.grad_inputs[0];
        auto* gg = args.grad_inputs[1];
        auto* gb = args.grad_inputs[2];
        std::vector<T> dxhat(width);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * width;
          T mean_d = T(0);
          T mean_dh = T(0);
          for (std::size_t j = 0; j < width; ++j) {
            const T g = go[base + j];
            const T h = (*xhat)[base + j];
            if (gg != nullptr) {
              (*gg)[j] += g * h;
            }
            if (gb != nullptr) {
              (*gb)[j] += g;
            }
            dxhat[j] = g * gv[j];
            mean_d += dxhat[j];
            mean_dh += dxhat[j] * h;
          }
          if (gx == nullptr) {
            continue;
          }
          mean_d /= static_cast<T>(width);
          mean_dh /= static_cast<T>(width);
          const T istd = (*inv_std)[r];
          for (std::size_t j = 0; j < width; ++j) {
            (*gx)[base + j] += istd * (dxhat[j] - mean_d - (*xhat)[base + j] * mean_dh);
          }
        }
      },
      "layer_norm");
}

template <class T>
Var<T> batch_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state, Mode mode,
                    T momentum, T eps) {
  require_rank(x.shape(), 4, "batch_norm2d");
  const std::size_t n = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  if (gamma.numel() != channels || beta.numel() != channels) {
    throw ShapeError("batch_norm2d: channel mismatch");
  }
  if (state.running_mean.numel() != channels || state.running_var.numel() != channels) {
    throw ShapeError("batch_norm2d: running statistics do not match channel count");
  }
  const auto xv = x.value().data();
  const auto gv = gamma.value().data();
  const auto bv = beta.value().data();
  Tensor<T> out(x.shape());

  if (mode == Mode::kEval) {
    if (state.batches_tracked[0] <= T(0)) {
      throw ConfigError("batch_norm2d: eval mode before any train step (running statistics uninitialized)");
    }
    auto scale_c = std::make_shared<std::vector<T>>(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      (*scale_c)[c] = T(1) / std::sqrt(state.running_var[c] + eps);
    }
    const Tensor<T> running_mean = state.running_mean;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t base = (b * channels + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          out[base + i] = (xv[base + i] - running_mean[c]) * (*scale_c)[c] * gv[c] + bv[c];
        }
      }
    }
    return x.tape()->record(
        std::move(out), {x, gamma, beta},
        [n, channels, hw, scale_c, running_mean](const BackwardArgs<T>& args) {
          const auto go = args.grad_output.data();
          const auto xv = args.inputs[0]->data();
          const auto gv = args.inputs[1]->data();
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t base = (b * channels + c) * hw;
              for (std::size_t i = 0; i < hw; ++i) {
                const T g = go[base + i];
                if (auto* gx = args.grad_inputs[0]) {
                  (*gx)[base + i] += g * gv[c] * (*scale_c)[c];
                }
                if (auto* gg = args.grad_inputs[1]) {
                  (*gg)[c] += g * (xv[base + i] - running_mean[c]) * (*scale_c)[c];
                }
                if (auto* gb = args.grad_inputs[2]) {
                  (*gb)[c] += g;
                }
              }
            }
          }
        },
        "batch_norm2d_eval");
  }

  const std::size_t count = n * hw;
  if (count < 2) {
    throw ShapeError("batch_norm2d: train mode needs N*H*W >= 2");
  }
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    T mu = T(0);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * channels + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        mu += xv[base + i];
      }
    }
    mu /= static_cast<T>(count);
    T var = T(0);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * channels + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        var += (xv[base + i] - mu) * (xv[base + i] - mu);
      }
    }
    const T biased = var / static_cast<T>(count);
    const T unbiased = var / static_cast<T>(count - 1);
    const T istd = T(1) / std::sqrt(biased + eps);
    (*inv_std)[c] = istd;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * channels + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T h = (xv[base + i] - mu) * istd;
        (*xhat)[base + i] = h;
        out[base + i] = h * gv[c] + bv[c];
      }
    }
    state.running_mean[c] = (T(1) - momentum) * state.running_mean[c] + momentum * mu;
    state.running_var[c] = (T(1) - momentum) * state.running_var[c] + momentum * unbiased;
  }
  state.batches_tracked[0] += T(1);
  return x.tape()->record(
      std::move(out), {x, gamma, beta},
      [n, channels, hw, count, xhat, inv_std](const BackwardArgs<T>& args) {
        const auto go = args.grad_output.data();
        const auto gv = args.inputs[1]->data();
        for (std::size_t c = 0; c < channels; ++c) {
          T sum_g = T(0);
          T sum_gh = T(0);
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t base = (b * channels + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_g += go[base + i];
              sum_gh += go[base + i] * (*xhat)[base + i];
            }
          }
          if (auto* gg = args.grad_inputs[1]) {
            (*gg)[c] += sum_gh;
          }
          if (auto* gb = args.grad_inputs[2]) {
            (*gb)[c] += sum_g;
          }
          if (auto* gx = args.grad_inputs[0]) {
            const T mean_g = sum_g / static_cast<T>(count);
            const T mean_gh = sum_gh / static_cast<T>(count);
            const T factor = gv[c] * (*inv_std)[c];
            for (std::size_t b = 0; b < n; ++b) {
              const std::size_t base = (b * channels + c) * hw;
              for (std::size_t i = 0; i < hw; ++i) {
                (*gx)[base + i] += factor * (go[base + i] - mean_g - (*xhat)[base + i] * mean_gh);
              }
            }
          }
        }
      },
      "batch_norm2d");
}

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias, std::size_t padding) {
  require_rank(x.shape(), 4, "conv2d");
  require_rank(weight.shape(), 4, "conv2d weight");
  const std::size_t n = x.dim(0);
  const std::size_t in_c = x.dim(1);
  const std::size_t height = x.dim(2);
  const std::size_t width = x.dim(3);
  const std::size_t out_c = weight.dim(0);
  const std::size_t kernel = weight.dim(2);
  if (weight.dim(1) != in_c || weight.dim(3) != kernel) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " does not match input " + shape_str(x.shape()));
  }
  if (2 * padding + 1 != kernel) {
    throw ShapeError("conv2d: only same-size stride-1 convolutions are supported");
  }
  if (bias && bias->numel() != out_c) {
    throw ShapeError("conv2d: bias length mismatch");
  }
  const std::size_t hw = height * width;
  const std::size_t patch = in_c * kernel * kernel;
  Tensor<T> out({n, out_c, height, width});
  std::vector<T> col(patch * hw);
  const T* xv = x.value().data().data();
  const T* wv = weight.value().data().data();
  for (std::size_t b = 0; b < n; ++b) {
    const T* src = xv + b * in_c * hw;
    if (kernel != 1) {
      im2col(src, in_c, height, width, kernel, padding, col.data());
      src = col.data();
    }
    T* dst = out.data().data() + b * out_c * hw;
    detail::gemm(false, false, out_c, hw, patch, wv, src, dst, false);
    if (bias) {
      const auto bv = bias->value().data();
      for (std::size_t o = 0; o < out_c; ++o) {
        for (std::size_t i = 0; i < hw; ++i) {
          dst[o * hw + i] += bv[o];
        }
      }
    }
  }
  std::vector<Var<T>> inputs{x, weight};
  if (bias) {
    inputs.push_back(*bias);
  }
  return x.tape()->record(
      std::move(out), std::move(inputs),
      [n, in_c, height, width, out_c, kernel, padding, hw, patch](const BackwardArgs<T>& args) {
        const T* go = args.grad_output.data().data();
        const T* xv = args.inputs[0]->data().data();
        const T* wv = args.inputs[1]->data().data();
        std::vector<T> col(patch * hw);
        std::vector<T> dcol(kernel != 1 ? patch * hw : 0);
        for (std::size_t b = 0; b < n; ++b) {
          const T* gob = go + b * out_c * hw;
          const T* src = xv + b * in_c * hw;
          if (auto* gw = args.grad_inputs[1]) {
            if (kernel != 1) {
              im2col(src, in_c, height, width, kernel, padding, col.data());
              src = col.data();
            }
            detail::gemm(false, true, out_c, patch, hw, gob, src, gw->data().data(), true);
          }
          if (auto* gx = args.grad_inputs[0]) {
            T* gxb = gx->data().data() + b * in_c * hw;
            if (kernel == 1) {
              detail::gemm(true, false, patch, hw, out_c, wv, gob, gxb, true);
            } else {
              detail::gemm(true, false, patch, hw, out_c, wv, gob, dcol.data(), false);
              col2im_add(dcol.data(), in_c, height, width, kernel, padding, gxb);
            }
          }
          if (args.grad_inputs.size() > 2 && args.grad_inputs[2] != nullptr) {
            auto gb = args.grad_inputs[2]->data();
            for (std::size_t o = 0; o < out_c; ++o) {
              for (std::size_t i = 0; i < hw; ++i) {
                gb[o] += gob[o * hw + i];
              }
            }
          }
        }
      },
      "conv2d");
}

template <class T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias) {
  require_rank(x.shape(), 4, "depthwise_conv2d");
  require_rank(weight.shape(), 4, "depthwise_conv2d weight");
  const std::size_t n = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t height = x.dim(2);
  const std::size_t width = x.dim(3);
  const std::size_t kernel = weight.dim(2);
  if (kernel % 2 == 0) {
    throw ShapeError("depthwise_conv2d: kernel size must be odd, got " + std::to_string(kernel));
  }
  if (weight.dim(0) != channels || weight.dim(1) != 1 || weight.dim(3) != kernel) {
    throw ShapeError("depthwise_conv2d: weight " + shape_str(weight.shape()) + " does not match " +
                     std::to_string(channels) + " channels");
  }
  if (bias && bias->numel() != channels) {
    throw ShapeError("depthwise_conv2d: bias length mismatch");
  }
  const auto pad = static_cast<std::ptrdiff_t>(kernel / 2);
  const auto h = static_cast<std::ptrdiff_t>(height);
  const auto w = static_cast<std::ptrdiff_t>(width);
  const auto k = static_cast<std::ptrdiff_t>(kernel);

  // Visits every (output, input, tap) triple of one channel plane.
  auto for_each_tap = [=](auto&& fn) {
    for (std::ptrdiff_t y = 0; y < h; ++y) {
      for (std::ptrdiff_t xx = 0; xx < w; ++xx) {
        for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
          const std::ptrdiff_t sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            continue;
          }
          for (std::ptrdiff_t kx = 0; kx < k; ++kx) {
            const std::ptrdiff_t sx = xx + kx - pad;
            if (sx < 0 || sx >= w) {
              continue;
            }
            fn(static_cast<std::size_t>(y * w + xx), static_cast<std::size_t>(sy * w + sx),
               static_cast<std::size_t>(ky * k + kx));
          }
        }
      }
    }
  };

  const std::size_t hw = height * width;
  const std::size_t taps = kernel * kernel;
  Tensor<T> out(x.shape());
  const auto xv = x.value().data();
  const auto wv = weight.value().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t plane = (b * channels + c) * hw;
      const T* filt = wv.data() + c * taps;
      const T b0 = bias ? bias->value()[c] : T(0);
      for (std::size_t i = 0; i < hw; ++i) {
        out[plane + i] = b0;
      }
      for_each_tap([&](std::size_t o, std::size_t s, std::size_t t) { out[plane + o] += filt[t] * xv[plane + s]; });
    }
  }
  std::vector<Var<T>> inputs{x, weight};
  if (bias) {
    inputs.push_back(*bias);
  }
  return x.tape()->record(
      std::move(out), std::move(inputs),
      [n, channels, hw, taps, for_each_tap](const BackwardArgs<T>& args) {
        const auto go = args.grad_output.data();
        const auto xv = args.inputs[0]->data();
        const auto wv = args.inputs[1]->data();
        auto* gx = args.grad_inputs[0];
        auto* gw = args.grad_inputs[1];
        auto* gb = args.grad_inputs.size() > 2 ? args.grad_inputs[2] : nullptr;
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t plane = (b * channels + c) * hw;
            const T* filt = wv.data() + c * taps;
            for_each_tap([&](std::size_t o, std::size_t s, std::size_t t) {
              const T g = go[plane + o];
              if (gx != nullptr) {
                (*gx)[plane + s] += g * filt[t];
              }
              if (gw != nullptr) {
                (*gw)[c * taps + t] += g * xv[plane + s];
              }
            });
            if (gb != nullptr) {
              for (std::size_t i = 0; i < hw; ++i) {
                (*gb)[c] += go[plane + i];
              }
            }
          }
        }
      },
      "depthwise_conv2d");
}

template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  Tensor<T> out({x.dim(0), x.dim(1)});
  const auto xv = x.value().data();
  for (std::size_t p = 0; p < planes; ++p) {
    T acc = T(0);
    for (std::size_t i = 0; i < hw; ++i) {
      acc += xv[p * hw + i];
    }
    out[p] = acc / static_cast<T>(hw);
  }
  return x.tape()->record(
      std::move(out), {x},
      [planes, hw](const BackwardArgs<T>& args) {
        const auto go = args.grad_output.data();
        auto gx = args.grad_inputs[0]->data();
        const T inv = T(1) / static_cast<T>(hw);
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t i = 0; i < hw; ++i) {
            gx[p * hw + i] += go[p] * inv;
          }
        }
      },
      "global_avg_pool");
}

template <class T>
Var<T> mul_channel(const Var<T>& x, const Var<T>& gate) {
  require_rank(x.shape(), 4, "mul_channel");
  if (gate.shape() != Shape{x.dim(0), x.dim(1)}) {
    throw ShapeError("mul_channel: gate " + shape_str(gate.shape()) + " does not match " + shape_str(x.shape()));
  }
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t hw = x.dim(2) * x.dim(3);
  Tensor<T> out = x.value();
  const auto gv = gate.value().data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < hw; ++i) {
      out[p * hw + i] *= gv[p];
    }
  }
  return x.tape()->record(
      std::move(out), {x, gate},
      [planes, hw](const BackwardArgs<T>& args) {
        const auto go = args.grad_output.data();
        const auto xv = args.inputs[0]->data();
        const auto gv = args.inputs[1]->data();
        for (std::size_t p = 0; p < planes; ++p) {
          T acc = T(0);
          for (std::size_t i = 0; i < hw; ++i) {
            if (auto* gx = args.grad_inputs[0]) {
              (*gx)[p * hw + i] += go[p * hw + i] * gv[p];
            }
            acc += go[p * hw + i] * xv[p * hw + i];
          }
          if (auto* gg = args.grad_inputs[1]) {
            (*gg)[p] += acc;
          }
        }
      },
      "mul_channel");
}

template <class T>
Var<T> dropout(const Var<T>& x, T rate, Mode mode, Rng& rng) {
  if (!(rate >= T(0) && rate < T(1))) {
    throw ConfigError("dropout: rate must lie in [0, 1)");
  }
  if (mode == Mode::kEval || rate == T(0)) {
    return x;
  }
  const T keep_scale = T(1) / (T(1) - rate);
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  for (auto& m : *mask) {
    m = rng.bernoulli(static_cast<double>(rate)) ? T(0) : keep_scale;
  }
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] *= (*mask)[i];
  }
  return x.tape()->record(
      std::move(out), {x},
      [mask](const BackwardArgs<T>& args) {
        const auto go = args.grad_output.data();
        auto gx = args.grad_inputs[0]->data();
        for (std::size_t i = 0; i < gx.size(); ++i) {
          gx[i] += go[i] * (*mask)[i];
        }
      },
      "dropout");
}

template <class T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets) {
  if (logits.numel() != targets.numel()) {
    throw ShapeError("bce_with_logits: logits and targets differ in length");
  }
  const std::size_t count = logits.numel();
  const auto zv = logits.value().data();
  T total = T(0);
  for (std::size_t i = 0; i < count; ++i) {
    const T t = targets[i];
    if (t != T(0) && t != T(1)) {
      throw ShapeError("bce_with_logits: target outside {0,1}");
    }
    const T z = zv[i];
    total += std::max(z, T(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  return logits.tape()->record(
      Tensor<T>::scalar(total / static_cast<T>(count)), {logits},
      [targets, count](const BackwardArgs<T>& args) {
        const T g = args.grad_output[0] / static_cast<T>(count);
        const auto zv = args.inputs[0]->data();
        auto gz = args.grad_inputs[0]->data();
        for (std::size_t i = 0; i < count; ++i) {
          const T z = zv[i];
          const T p = z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
          gz[i] += g * (p - targets[i]);
        }
      },
      "bce_with_logits");
}

// ---------------------------------------------------------------------------

template <class T>
Tensor<T> trunc_normal(const Shape& shape, double std, const Rng& rng, const std::string& name) {
  Rng local = rng.derive(name);
  Tensor<T> out(shape);
  for (auto& v : out.storage()) {
    v = static_cast<T>(local.truncated_normal(std, 2.0));
  }
  return out;
}

template <class T>
Tensor<T> kaiming_normal_fan_out(const Shape& shape, std::size_t fan_out, const Rng& rng, const std::string& name) {
  Rng local = rng.derive(name);
  const double std = std::sqrt(2.0 / static_cast<double>(fan_out));
  Tensor<T> out(shape);
  for (auto& v : out.storage()) {
    v = static_cast<T>(local.normal() * std);
  }
  return out;
}

template <class T>
Linear<T>::Linear(const std::string& name, std::size_t in, std::size_t out, bool with_bias, const Rng& rng)
    : weight(name + ".weight", trunc_normal<T>({out, in}, 0.02, rng, name + ".weight")) {
  if (with_bias) {
    bias.emplace(name + ".bias", Tensor<T>({out}));
  }
}

template <class T>
Var<T> Linear<T>::forward(Tape<T>& tape, const Var<T>& x) {
  std::optional<Var<T>> b;
  if (bias) {
    b = tape.param(*bias);
  }
  return linear(x, tape.param(weight), b);
}

template <class T>
void Linear<T>::collect(ParameterList<T>& params) {
  params.push_back(&weight);
  if (bias) {
    params.push_back(&*bias);
  }
}

template <class T>
LayerNorm<T>::LayerNorm(const std::string& name, std::size_t dim)
    : gamma(name + ".weight", Tensor<T>({dim}, T(1))), beta(name + ".bias", Tensor<T>({dim})) {}

template <class T>
Var<T> LayerNorm<T>::forward(Tape<T>& tape, const Var<T>& x) {
  return layer_norm(x, tape.param(gamma), tape.param(beta));
}

template <class T>
void LayerNorm<T>::collect(ParameterList<T>& params) {
  params.push_back(&gamma);
  params.push_back(&beta);
}

template <class T>
BatchNorm2d<T>::BatchNorm2d(const std::string& n, std::size_t channels)
    : gamma(n + ".weight", Tensor<T>({channels}, T(1))), beta(n + ".bias", Tensor<T>({channels})), name(n) {
  state.running_mean = Tensor<T>({channels});
  state.running_var = Tensor<T>({channels}, T(1));
}

template <class T>
Var<T> BatchNorm2d<T>::forward(Tape<T>& tape, const Var<T>& x, Mode mode) {
  return batch_norm2d(x, tape.param(gamma), tape.param(beta), state, mode);
}

template <class T>
void BatchNorm2d<T>::collect(ParameterList<T>& params) {
  params.push_back(&gamma);
  params.push_back(&beta);
}

template <class T>
void BatchNorm2d<T>::collect_buffers(BufferList<T>& buffers) {
  buffers.emplace_back(name + ".running_mean", &state.running_mean);
  buffers.emplace_back(name + ".running_var", &state.running_var);
  buffers.emplace_back(name + ".batches_tracked", &state.batches_tracked);
}

template <class T>
Conv2d<T>::Conv2d(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, bool with_bias,
                  const Rng& rng)
    : weight(name + ".weight",
             kaiming_normal_fan_out<T>({out, in, kernel, kernel}, out * kernel * kernel, rng, name + ".weight")) {
  if (with_bias) {
    bias.emplace(name + ".bias", Tensor<T>({out}));
  }
}

template <class T>
Var<T> Conv2d<T>::forward(Tape<T>& tape, const Var<T>& x) {
  std::optional<Var<T>> b;
  if (bias) {
    b = tape.param(*bias);
  }
  return conv2d(x, tape.param(weight), b, weight.value.dim(2) / 2);
}

template <class T>
void Conv2d<T>::collect(ParameterList<T>& params) {
  params.push_back(&weight);
  if (bias) {
    params.push_back(&*bias);
  }
}

template <class T>
DepthwiseConv2d<T>::DepthwiseConv2d(const std::string& name, std::size_t channels, std::size_t kernel, bool with_bias,
                                    const Rng& rng)
    : weight(name + ".weight",
             kaiming_normal_fan_out<T>({channels, 1, kernel, kernel}, kernel * kernel, rng, name + ".weight")) {
  if (with_bias) {
    bias.emplace(name + ".bias", Tensor<T>({channels}));
  }
}

template <class T>
Var<T> DepthwiseConv2d<T>::forward(Tape<T>& tape, const Var<T>& x) {
  std::optional<Var<T>> b;
  if (bias) {
    b = tape.param(*bias);
  }
  return depthwise_conv2d(x, tape.param(weight), b);
}

template <class T>
void DepthwiseConv2d<T>::collect(ParameterList<T>& params) {
  params.push_back(&weight);
  if (bias) {
    params.push_back(&*bias);
  }
}

#define LDCSF_INSTANTIATE_NN(T)                                                                                    \
  template Var<T> linear(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);                              \
  template Var<T> relu(const Var<T>&);                                                                             \
  template Var<T> sigmoid(const Var<T>&);                                                                          \
  template Var<T> gelu(const Var<T>&);                                                                             \
  template Var<T> h_swish(const Var<T>&);                                                                          \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);                                      \
  template Var<T> batch_norm2d(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormState<T>&, Mode, T, T);       \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, std::size_t);                 \
  template Var<T> depthwise_conv2d(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&);                    \
  template Var<T> global_avg_pool(const Var<T>&);                                                                  \
  template Var<T> mul_channel(const Var<T>&, const Var<T>&);                                                       \
  template Var<T> dropout(const Var<T>&, T, Mode, Rng&);                                                           \
  template Var<T> bce_with_logits(const Var<T>&, const Tensor<T>&);                                                \
  template Tensor<T> trunc_normal(const Shape&, double, const Rng&, const std::string&);                           \
  template Tensor<T> kaiming_normal_fan_out(const Shape&, std::size_t, const Rng&, const std::string&);            \
  template class Linear<T>;                                                                                        \
  template class LayerNorm<T>;                                                                                     \
  template class BatchNorm2d<T>;                                                                                   \
  template class Conv2d<T>;                                                                                        \
  template class DepthwiseConv2d<T>;

LDCSF_INSTANTIATE_NN(float)
LDCSF_INSTANTIATE_NN(double)

}  // namespace ldcsf::nn
