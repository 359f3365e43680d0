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

#include "ldcsf/eval.hpp"
#include "ldcsf/rng.hpp"

namespace {

using namespace ldcsf;

void BM_RocCurve(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  std::vector<double> scores(n);
  std::vector<std::uint8_t> truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.uniform();
    truth[i] = static_cast<std::uint8_t>(rng.below(2));
  }
  truth[0] = 1;
  truth[1] = 0;
  for (auto _ : state) {
    auto c = eval::roc_curve(scores, truth);
    benchmark::DoNotOptimize(c.auc);
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n));
}
BENCHMARK(BM_RocCurve)->Arg(1000)->Arg(100000);

void BM_Evaluate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  std::vector<eval::Scores> scores(n);
  std::vector<LabelVector> truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& s : scores[i]) {
      s = rng.uniform();
    }
    truth[i] = LabelVector::from_mask(static_cast<unsigned>(1 + rng.below(15)));
  }
  for (auto _ : state) {
    auto r = eval::evaluate(scores, truth);
    benchmark::DoNotOptimize(r.roc.micro.auc);
  }
}
BENCHMARK(BM_Evaluate)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
