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

#include "ldcsf/ops.hpp"

#include <algorithm>
#include <cmath>

namespace ldcsf {
namespace {

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class T>
void axpy(std::span<T> dst, std::span<const T> src, T alpha = T(1)) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] += alpha * src[i];
  }
}

}  // namespace

namespace detail {

template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate) {
  if (!accumulate) {
    std::fill(c, c + m * n, T(0));
  }
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      const T* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = arow[p];
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) {
          crow[j] += av * brow[j];
        }
      }
    }
  } else if (!trans_a && trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* arow = a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T acc = T(0);
        for (std::size_t p = 0; p < k; ++p) {
          acc += arow[p] * brow[p];
        }
        c[i * n + j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    for (std::size_t p = 0; p < k; ++p) {
      const T* acol = a + p * m;
      const T* brow = b + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const T av = acol[i];
        T* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          crow[j] += av * brow[j];
        }
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        T acc = T(0);
        for (std::size_t p = 0; p < k; ++p) {
          acc += a[p * m + i] * b[j * k + p];
        }
        c[i * n + j] += acc;
      }
    }
  }
}

}  // namespace detail

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  axpy(out.data(), b.value().data());
  return a.tape()->record(
      std::move(out), {a, b},
      [](const BackwardArgs<T>& args) {
        for (auto* g : args.grad_inputs) {
          if (g != nullptr) {
            axpy(g->data(), args.grad_output.data());
          }
        }
      },
      "add");
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  axpy(out.data(), b.value().data(), T(-1));
  return a.tape()->record(
      std::move(out), {a, b},
      [](const BackwardArgs<T>& args) {
        if (args.grad_inputs[0] != nullptr) {
          axpy(args.grad_inputs[0]->data(), args.grad_output.data());
        }
        if (args.grad_inputs[1] != nullptr) {
          axpy(args.grad_inputs[1]->data(), args.grad_output.data(), T(-1));
        }
      },
      "sub");
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] *= bv[i];
  }
  return a.tape()->record(
      std::move(out), {a, b},
      [](const BackwardArgs<T>& args) {
        const auto go = args.grad_output.data();
        for (int side = 0; side < 2; ++side) {
          if (auto* g = args.grad_inputs[side]) {
            const auto other = args.inputs[1 - side]->data();
            auto gd = g->data();
            for (std::size_t i = 0; i < gd.size(); ++i) {
              gd[i] += go[i] * other[i];
            }
          }
        }
      },
      "mul");
}

template <class T>
Var<T> scale(const Var<T>& x, T factor) {
  Tensor<T> out = x.value();
  for (auto& v : out.storage()) {
    v *= factor;
  }
  return x.tape()->record(
      std::move(out), {x},
      [factor](const BackwardArgs<T>& args) { axpy(args.grad_inputs[0]->data(), args.grad_output.data(), factor); },
      "scale");
}

template <class T>
Var<T> add_tiled(const Var<T>& x, const Var<T>& y) {
  const std::size_t period = y.numel();
  if (x.numel() % period != 0) {
    throw ShapeError("add_tiled: " + shape_str(y.shape()) + " does not tile " + shape_str(x.shape()));
  }
  Tensor<T> out = x.value();
  const auto yv = y.value().data();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] += yv[i % period];
  }
  return x.tape()->record(
      std::move(out), {x, y},
      [period](const BackwardArgs<T>& args) {
        const auto go = args.grad_output.data();
        if (auto* gx = args.grad_inputs[0]) {
          axpy(gx->data(), go);
        }
        if (auto* gy = args.grad_inputs[1]) {
          auto gd = gy->data();
          for (std::size_t i = 0; i < go.size(); ++i) {
            gd[i % period] += go[i];
          }
        }
      },
      "add_tiled");
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0);
  const std::size_t k = a.dim(1);
  const std::size_t n = b.dim(1);
  Tensor<T> out({m, n});
  detail::gemm(false, false, m, n, k, a.value().data().data(), b.value().data().data(), out.data().data(), false);
  return a.tape()->record(
      std::move(out), {a, b},
      [m, k, n](const BackwardArgs<T>& args) {
        const T* go = args.grad_output.data().data();
        if (auto* ga = args.grad_inputs[0]) {
          // dA = dC * B^T
          detail::gemm(false, true, m, k, n, go, args.inputs[1]->data().data(), ga->data().data(), true);
        }
        if (auto* gb = args.grad_inputs[1]) {
          // dB = A^T * dC
          detail::gemm(true, false, k, n, m, args.inputs[0]->data().data(), go, gb->data().data(), true);
        }
      },
      "matmul");
}

template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  if (a.shape().size() != 3 || b.shape().size() != 3 || a.dim(0) != b.dim(0)) {
    throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t batch = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  if ((transpose_b ? b.dim(2) : b.dim(1)) != k) {
    throw ShapeError("bmm: inner dimension mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor<T> out({batch, m, n});
  const T* av = a.value().data().data();
  const T* bv = b.value().data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    detail::gemm(false, transpose_b, m, n, k, av + i * m * k, bv + i * k * n, out.data().data() + i * m * n, false);
  }
  return a.tape()->record(
      std::move(out), {a, b},
      [batch, m, k, n, transpose_b](const BackwardArgs<T>& args) {
        const T* go = args.grad_output.data().data();
        const T* av = args.inputs[0]->data().data();
        const T* bv = args.inputs[1]->data().data();
        for (std::size_t i = 0; i < batch; ++i) {
          const T* goi = go + i * m * n;
          if (auto* ga = args.grad_inputs[0]) {
            // dA = dC * op(B)^T
            detail::gemm(false, !transpose_b, m, k, n, goi, bv + i * k * n, ga->data().data() + i * m * k, true);
          }
          if (auto* gb = args.grad_inputs[1]) {
            if (transpose_b) {
              // B is [n,k]: dB = dC^T * A
              detail::gemm(true, false, n, k, m, goi, av + i * m * k, gb->data().data() + i * k * n, true);
            } else {
              detail::gemm(true, false, k, n, m, av + i * m * k, goi, gb->data().data() + i * k * n, true);
            }
          }
        }
      },
      "bmm");
}

template <class T>
Var<T> softmax_last_dim(const Var<T>& x) {
  if (x.shape().empty()) {
    throw ShapeError("softmax_last_dim: scalar input");
  }
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  Tensor<T> out(x.shape());
  const auto xv = x.value().data();
  auto ov = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * width;
    T* o = ov.data() + r * width;
    const T peak = *std::max_element(in, in + width);
    T total = T(0);
    for (std::size_t j = 0; j < width; ++j) {
      o[j] = std::exp(in[j] - peak);
      total += o[j];
    }
    for (std::size_t j = 0; j < width; ++j) {
      o[j] /= total;
    }
  }
  return x.tape()->record(
      std::move(out), {x},
      [rows, width](const BackwardArgs<T>& args) {
        const auto y = args.output.data();
        const auto go = args.grad_output.data();
        auto gx = args.grad_inputs[0]->data();
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t base = r * width;
          T dot = T(0);
          for (std::size_t j = 0; j < width; ++j) {
            dot += go[base + j] * y[base + j];
          }
          for (std::size_t j = 0; j < width; ++j) {
            gx[base + j] += y[base + j] * (go[base + j] - dot);
          }
        }
      },
      "softmax");
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape()->record(
      std::move(out), {x},
      [](const BackwardArgs<T>& args) { axpy(args.grad_inputs[0]->data(), args.grad_output.data()); }, "reshape");
}

template <class T>
Var<T> gather(const Var<T>& x, IndexMap index, Shape out_shape) {
  if (!index || index->size() != numel_of(out_shape)) {
    throw ShapeError("gather: index length does not match output shape " + shape_str(out_shape));
  }
  const auto xv = x.value().data();
  const auto limit = static_cast<std::int64_t>(xv.size());
  Tensor<T> out(std::move(out_shape));
  auto ov = out.data();
  const auto& idx = *index;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= limit) {
      throw ShapeError("gather: index out of range");
    }
    ov[i] = idx[i] < 0 ? T(0) : xv[static_cast<std::size_t>(idx[i])];
  }
  return x.tape()->record(
      std::move(out), {x},
      [index](const BackwardArgs<T>& args) {
        const auto go = args.grad_output.data();
        auto gx = args.grad_inputs[0]->data();
        const auto& idx = *index;
        for (std::size_t i = 0; i < idx.size(); ++i) {
          if (idx[i] >= 0) {
            gx[static_cast<std::size_t>(idx[i])] += go[i];
          }
        }
      },
      "gather");
}

IndexMap permute_index(const Shape& shape, const std::vector<std::size_t>& perm) {
  const std::size_t rank = shape.size();
  if (perm.size() != rank) {
    throw ShapeError("permute: permutation rank mismatch");
  }
  std::vector<bool> seen(rank, false);
  for (const auto p : perm) {
    if (p >= rank || seen[p]) {
      throw ShapeError("permute: invalid permutation");
    }
    seen[p] = true;
  }
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t d = rank; d-- > 1;) {
    in_strides[d - 1] = in_strides[d] * shape[d];
  }
  Shape out_shape(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    out_shape[d] = shape[perm[d]];
  }
  const std::size_t total = numel_of(shape);
  auto index = std::make_shared<std::vector<std::int64_t>>(total);
  std::vector<std::size_t> coord(rank, 0);
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      src += coord[d] * in_strides[perm[d]];
    }
    (*index)[i] = static_cast<std::int64_t>(src);
    for (std::size_t d = rank; d-- > 0;) {
      if (++coord[d] < out_shape[d]) {
        break;
      }
      coord[d] = 0;
    }
  }
  return index;
}

template <class T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm) {
  Shape out_shape(perm.size());
  for (std::size_t d = 0; d < perm.size() && d < x.shape().size(); ++d) {
    out_shape[d] = x.shape()[perm[d]];
  }
  return gather(x, permute_index(x.shape(), perm), std::move(out_shape));
}

template <class T>
Var<T> sum(const Var<T>& x) {
  T total = T(0);
  for (const T v : x.value().data()) {
    total += v;
  }
  return x.tape()->record(
      Tensor<T>::scalar(total), {x},
      [](const BackwardArgs<T>& args) {
        const T g = args.grad_output[0];
        for (auto& v : args.grad_inputs[0]->storage()) {
          v += g;
        }
      },
      "sum");
}

template <class T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

#define LDCSF_INSTANTIATE_OPS(T)                                                                                  \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                              \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                              \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                              \
  template Var<T> scale(const Var<T>&, T);                                                                        \
  template Var<T> add_tiled(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> bmm(const Var<T>&, const Var<T>&, bool);                                                        \
  template Var<T> softmax_last_dim(const Var<T>&);                                                                \
  template Var<T> reshape(const Var<T>&, Shape);                                                                  \
  template Var<T> gather(const Var<T>&, IndexMap, Shape);                                                         \
  template Var<T> permute(const Var<T>&, const std::vector<std::size_t>&);                                        \
  template Var<T> sum(const Var<T>&);                                                                             \
  template Var<T> mean(const Var<T>&);                                                                            \
  template void detail::gemm(bool, bool, std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);

LDCSF_INSTANTIATE_OPS(float)
LDCSF_INSTANTIATE_OPS(double)

}  // namespace ldcsf
