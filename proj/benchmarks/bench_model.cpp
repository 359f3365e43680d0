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

#include <benchmark/benchmark.h>

#include "ldcsf/model.hpp"
#include "ldcsf/optim.hpp"

namespace {

using namespace ldcsf;

Tensor<float> images(std::size_t n, std::size_t side, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t({n, 3, side, side});
  for (auto& v : t.data()) {
    v = static_cast<float>(rng.uniform());
  }
  return t;
}

void BM_ToyForward(benchmark::State& state) {
  model::LdcsfModel<float> net(model::ModelConfig::toy(), 1);
  net.set_mode(nn::Mode::kTrain);
  const auto x = images(static_cast<std::size_t>(state.range(0)), 32, 2);
  Rng drop(3);
  for (auto _ : state) {
    Tape<float> tape(false);
    auto y = net.forward(tape, tape.constant(x), &drop);
    benchmark::DoNotOptimize(y.value().data().data());
  }
}
BENCHMARK(BM_ToyForward)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

// Forward, loss, backward and one SGD step.
void BM_ToyTrainStep(benchmark::State& state) {
  model::LdcsfModel<float> net(model::ModelConfig::toy(), 1);
  Sgd<float> opt(SgdConfig{});
  const auto params = net.parameters();
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto x = images(n, 32, 4);
  Tensor<float> targets({n, kNumLabels});
  for (std::size_t i = 0; i < targets.numel(); ++i) {
    targets[i] = static_cast<float>((i / 3) % 2);
  }
  Rng drop(5);
  for (auto _ : state) {
    Tape<float> tape;
    const auto loss = model::multilabel_loss(net.forward(tape, tape.constant(x), &drop), targets);
    Sgd<float>::zero_grad(params);
    tape.backward(loss.total);
    opt.step(params);
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n));
}
BENCHMARK(BM_ToyTrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

// Full-width model, one 224x224 image, eval mode.
void BM_DefaultForward(benchmark::State& state) {
  model::LdcsfModel<float> net(model::ModelConfig{}, 1);
  {
    Tape<float> warm(false);
    Rng drop(6);
    net.forward(warm, warm.constant(images(2, 224, 7)), &drop);
  }
  net.set_mode(nn::Mode::kEval);
  const auto x = images(1, 224, 8);
  for (auto _ : state) {
    Tape<float> tape(false);
    auto y = net.forward(tape, tape.constant(x));
    benchmark::DoNotOptimize(y.value().data().data());
  }
}
BENCHMARK(BM_DefaultForward)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace

BENCHMARK_MAIN();
