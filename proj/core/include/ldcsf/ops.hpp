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

#ifndef LDCSF_OPS_HPP
#define LDCSF_OPS_HPP

#include <cstdint>
#include <memory>
#include <vector>

#include "ldcsf/tape.hpp"

// Differentiable tensor primitives. Every op checks shapes explicitly; there
// is no implicit broadcasting.
namespace ldcsf {

/// Flat source offsets for gather(); a negative entry yields zero.
using IndexMap = std::shared_ptr<const std::vector<std::int64_t>>;

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> scale(const Var<T>& x, T factor);
// y is repeated along x with period y.numel() (bias-add style).
template <class T>
Var<T> add_tiled(const Var<T>& x, const Var<T>& y);

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);
// [B,m,k] x [B,k,n] -> [B,m,n]; with transpose_b, b is [B,n,k].
template <class T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b = false);

// Numerically stable softmax over the trailing dimension.
template <class T>
Var<T> softmax_last_dim(const Var<T>& x);

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape);
// out[i] = x[index[i]] (0 where index[i] < 0); backward scatter-adds.
template <class T>
Var<T> gather(const Var<T>& x, IndexMap index, Shape out_shape);
template <class T>
Var<T> permute(const Var<T>& x, const std::vector<std::size_t>& perm);

template <class T>
Var<T> sum(const Var<T>& x);
template <class T>
Var<T> mean(const Var<T>& x);

IndexMap permute_index(const Shape& shape, const std::vector<std::size_t>& perm);

namespace detail {
// C (+)= op(A) * op(B) with op(A): m x k, op(B): k x n, all row-major.
template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate);
}  // namespace detail

}  // namespace ldcsf

#endif  // LDCSF_OPS_HPP
