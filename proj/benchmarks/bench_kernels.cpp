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

#include <vector>

#include <benchmark/benchmark.h>

#include "ldcsf/attention.hpp"
#include "ldcsf/ops.hpp"
#include "ldcsf/rng.hpp"

namespace {

using namespace ldcsf;

Tensor<float> noise(Shape shape, Rng& rng) {
  Tensor<float> t(std::move(shape));
  for (auto& v : t.data()) {
    v = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  return t;
}

void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = noise({n, n}, rng);
  const auto b = noise({n, n}, rng);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    detail::gemm(false, false, n, n, n, a.data().data(), b.data().data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * 2 * n * n * n));
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256);

void BM_GemmTransposedB(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const auto a = noise({n, n}, rng);
  const auto b = noise({n, n}, rng);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    detail::gemm(false, true, n, n, n, a.data().data(), b.data().data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * 2 * n * n * n));
}
BENCHMARK(BM_GemmTransposedB)->Arg(128);

// Stage-1 sized windows: 56x56 grid, M=7, C=96, 3 heads.
void BM_WindowAttentionForward(benchmark::State& state) {
  const bool shifted = state.range(0) != 0;
  Rng rng(3);
  attn::WindowAttention<float> a("attn", 96, 7, 3, rng);
  const auto x = noise({64, 49, 96}, rng);
  const auto mask = attn::build_shift_mask<float>(56, 56, 7, 3);
  for (auto _ : state) {
    Tape<float> tape(false);
    auto y = a.forward(tape, tape.constant(x), shifted ? &mask : nullptr).out;
    benchmark::DoNotOptimize(y.value().data().data());
  }
}
BENCHMARK(BM_WindowAttentionForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_WindowAttentionBackward(benchmark::State& state) {
  Rng rng(4);
  attn::WindowAttention<float> a("attn", 32, 7, 1, rng);
  ParameterList<float> params;
  a.collect(params);
  const auto x = noise({16, 49, 32}, rng);
  for (auto _ : state) {
    for (auto* p : params) {
      p->zero_grad();
    }
    Tape<float> tape;
    tape.backward(sum(a.forward(tape, tape.constant(x)).out));
  }
}
BENCHMARK(BM_WindowAttentionBackward)->Unit(benchmark::kMillisecond);

void BM_ShiftMask(benchmark::State& state) {
  for (auto _ : state) {
    auto m = attn::build_shift_mask<float>(56, 56, 7, 3);
    benchmark::DoNotOptimize(m.data().data());
  }
}
BENCHMARK(BM_ShiftMask);

}  // namespace

BENCHMARK_MAIN();
