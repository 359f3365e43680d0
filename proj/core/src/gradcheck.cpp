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

#include "ldcsf/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <memory>

#include "ldcsf/attention.hpp"
#include "ldcsf/model.hpp"

namespace ldcsf::gradcheck {
namespace {

using T = double;

Tensor<T> random_tensor(const Shape& shape, Rng& rng, double std = 1.0) {
  Tensor<T> t(shape);
  for (auto& v : t.data()) {
    v = std * rng.normal();
  }
  return t;
}

void randomize(const ParameterList<T>& params, Rng& rng, double std = 0.5) {
  for (auto* p : params) {
    for (auto& v : p->value.data()) {
      v = std * rng.normal();
    }
  }
}

// Weighted sum of every output entry, so each output carries its own gradient.
Var<T> project(Tape<T>& tape, const Var<T>& out, const Tensor<T>& weights) {
  return sum(mul(out, tape.constant(weights)));
}

T evaluate(const LossFn& loss) {
  Tape<T> tape(false);
  return loss(tape).value().item();
}

// Owns the modules and inputs of one check.
struct Case {
  explicit Case(std::string n) : name(std::move(n)) {}

  std::string name;
  std::vector<std::unique_ptr<Parameter<T>>> inputs;
  ParameterList<T> params;
  LossFn loss;
  std::shared_ptr<void> keep;  // module storage

  Parameter<T>& input(const std::string& n, const Shape& shape, Rng& rng, double std = 1.0) {
    inputs.push_back(std::make_unique<Parameter<T>>(n, random_tensor(shape, rng, std)));
    params.push_back(inputs.back().get());
    return *inputs.back();
  }
};

template <class M>
std::shared_ptr<M> hold(Case& c, std::shared_ptr<M> module) {
  c.keep = module;
  return module;
}

// Output-projection loss over `forward(tape, x)`, with weights fixed up front.
template <class Fwd>
LossFn weighted(Parameter<T>& x, const Shape& out_shape, Rng& rng, Fwd forward) {
  auto weights = std::make_shared<Tensor<T>>(random_tensor(out_shape, rng));
  return [&x, weights, forward](Tape<T>& tape) { return project(tape, forward(tape, tape.param(x)), *weights); };
}

std::vector<Case> layer_cases(Rng& rng) {
  std::vector<Case> cases;
  const Rng init = rng.derive("init");

  {
    Case c{"linear"};
    auto& x = c.input("x", {3, 5}, rng);
    auto m = hold(c, std::make_shared<nn::Linear<T>>("fc", 5, 4, true, init));
    m->collect(c.params);
    c.loss = weighted(x, {3, 4}, rng, [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"layer_norm"};
    auto& x = c.input("x", {3, 6}, rng);
    auto m = hold(c, std::make_shared<nn::LayerNorm<T>>("ln", 6));
    m->collect(c.params);
    c.loss = weighted(x, {3, 6}, rng, [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"batch_norm2d (train)"};
    auto& x = c.input("x", {2, 3, 3, 3}, rng);
    auto m = hold(c, std::make_shared<nn::BatchNorm2d<T>>("bn", 3));
    m->collect(c.params);
    c.loss = weighted(x, {2, 3, 3, 3}, rng,
                      [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v, nn::Mode::kTrain); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"batch_norm2d (eval)"};
    auto& x = c.input("x", {2, 3, 3, 3}, rng);
    auto m = hold(c, std::make_shared<nn::BatchNorm2d<T>>("bn", 3));
    m->collect(c.params);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      m->state.running_mean[ch] = 0.3 * rng.normal();
      m->state.running_var[ch] = 0.5 + rng.uniform();
    }
    m->state.batches_tracked[0] = 1;
    c.loss = weighted(x, {2, 3, 3, 3}, rng,
                      [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v, nn::Mode::kEval); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"conv2d 3x3"};
    auto& x = c.input("x", {2, 2, 4, 4}, rng);
    auto m = hold(c, std::make_shared<nn::Conv2d<T>>("conv", 2, 3, 3, true, init));
    m->collect(c.params);
    c.loss = weighted(x, {2, 3, 4, 4}, rng, [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"conv2d 1x1"};
    auto& x = c.input("x", {2, 3, 3, 3}, rng);
    auto m = hold(c, std::make_shared<nn::Conv2d<T>>("conv", 3, 5, 1, true, init));
    m->collect(c.params);
    c.loss = weighted(x, {2, 5, 3, 3}, rng, [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"depthwise_conv2d 3x3"};
    auto& x = c.input("x", {2, 3, 4, 4}, rng);
    auto m = hold(c, std::make_shared<nn::DepthwiseConv2d<T>>("dw", 3, 3, true, init));
    m->collect(c.params);
    c.loss = weighted(x, {2, 3, 4, 4}, rng, [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v); });
    cases.push_back(std::move(c));
  }
  auto unary = [&](const char* name, Var<T> (*fn)(const Var<T>&)) {
    Case c{name};
    auto& x = c.input("x", {3, 7}, rng, 2.0);
    c.loss = weighted(x, {3, 7}, rng, [fn](Tape<T>&, const Var<T>& v) { return fn(v); });
    cases.push_back(std::move(c));
  };
  unary("relu", &nn::relu<T>);
  unary("sigmoid", &nn::sigmoid<T>);
  unary("gelu", &nn::gelu<T>);
  unary("h_swish", &nn::h_swish<T>);
  unary("softmax", &softmax_last_dim<T>);
  unary("global_avg_pool", [](const Var<T>& v) { return nn::global_avg_pool(reshape(v, {3, 7, 1, 1})); });
  {
    Case c{"bmm"};
    auto& a = c.input("a", {2, 3, 4}, rng);
    auto& b = c.input("b", {2, 5, 4}, rng);
    c.loss = weighted(a, {2, 3, 5}, rng, [&b](Tape<T>& t, const Var<T>& v) { return bmm(v, t.param(b), true); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"mul_channel"};
    auto& x = c.input("x", {2, 3, 2, 2}, rng);
    auto& g = c.input("gate", {2, 3}, rng);
    c.loss = weighted(x, {2, 3, 2, 2}, rng,
                      [&g](Tape<T>& t, const Var<T>& v) { return nn::mul_channel(v, t.param(g)); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"dropout"};
    auto& x = c.input("x", {4, 6}, rng);
    c.loss = weighted(x, {4, 6}, rng, [](Tape<T>&, const Var<T>& v) {
      Rng mask(11);
      return nn::dropout(v, T(0.25), nn::Mode::kTrain, mask);
    });
    cases.push_back(std::move(c));
  }
  {
    Case c{"bce_with_logits"};
    auto& x = c.input("logits", {5, 4}, rng, 2.0);
    auto targets = std::make_shared<Tensor<T>>(Shape{5, 4});
    for (auto& v : targets->data()) {
      v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    c.loss = [&x, targets](Tape<T>& t) { return nn::bce_with_logits(t.param(x), *targets); };
    cases.push_back(std::move(c));
  }
  {
    Case c{"window_attention (shift mask)"};
    auto& x = c.input("x", {4, 4, 8}, rng);
    auto m = hold(c, std::make_shared<attn::WindowAttention<T>>("attn", 8, 2, 2, init));
    m->collect(c.params);
    auto mask = std::make_shared<Tensor<T>>(attn::build_shift_mask<T>(4, 4, 2, 1));
    c.loss = weighted(x, {4, 4, 8}, rng,
                      [m, mask](Tape<T>& t, const Var<T>& v) { return m->forward(t, v, mask.get()).out; });
    cases.push_back(std::move(c));
  }
  {
    Case c{"swin_block (shifted)"};
    auto& x = c.input("x", {2, 16, 8}, rng);
    auto m = hold(c, std::make_shared<model::SwinBlock<T>>("blk", 8, 2, 2, true, 4, init));
    m->collect(c.params);
    c.loss = weighted(x, {2, 16, 8}, rng, [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"swin_block (padded grid)"};
    auto& x = c.input("x", {2, 9, 8}, rng);
    auto m = hold(c, std::make_shared<model::SwinBlock<T>>("blk", 8, 2, 2, true, 4, init));
    m->collect(c.params);
    c.loss = weighted(x, {2, 9, 8}, rng, [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"ldc"};
    auto& x = c.input("x", {2, 8, 4, 4}, rng);
    auto m = hold(c, std::make_shared<model::LdcModule<T>>("ldc", 8, 4, 3, init));
    m->collect(c.params);
    c.loss = weighted(x, {2, 8, 4, 4}, rng,
                      [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v, nn::Mode::kTrain); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"fr"};
    auto& x = c.input("x", {2, 8, 3, 3}, rng);
    auto m = hold(c, std::make_shared<model::FrModule<T>>("fr", 8, 4, init));
    m->collect(c.params);
    c.loss = weighted(x, {2, 8, 3, 3}, rng, [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"patch_merging"};
    auto& x = c.input("x", {2, 16, 4}, rng);
    auto m = hold(c, std::make_shared<model::PatchMerging<T>>("merge", 4, init));
    m->collect(c.params);
    c.loss = weighted(x, {2, 4, 8}, rng, [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"patch_embed"};
    auto& x = c.input("img", {2, 3, 8, 8}, rng);
    auto cfg = model::ModelConfig::toy();
    auto m = hold(c, std::make_shared<model::PatchEmbed<T>>("embed", cfg, init));
    m->collect(c.params);
    c.loss = weighted(x, {2, 4, cfg.embed_dim}, rng, [m](Tape<T>& t, const Var<T>& v) { return m->forward(t, v); });
    cases.push_back(std::move(c));
  }
  {
    Case c{"resnet_head"};
    auto& x = c.input("tokens", {2, 4, 16}, rng);
    auto m = hold(c, std::make_shared<model::ResnetHead<T>>("head", 16, 2, 4, 0.1, init));
    m->collect(c.params);
    c.loss = weighted(x, {2, 4}, rng, [m](Tape<T>& t, const Var<T>& v) {
      Rng drop(5);
      return m->forward(t, v, nn::Mode::kTrain, &drop);
    });
    cases.push_back(std::move(c));
  }
  {
    Case c{"multilabel_loss"};
    auto& x = c.input("logits", {6, 4}, rng, 2.0);
    auto targets = std::make_shared<Tensor<T>>(Shape{6, 4});
    for (auto& v : targets->data()) {
      v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    c.loss = [&x, targets](Tape<T>& t) { return model::multilabel_loss(t.param(x), *targets).total; };
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

Result check(const std::string& name, const ParameterList<double>& params, const LossFn& loss, std::size_t samples,
             const Options& opts, Rng& rng) {
  const auto start = std::chrono::steady_clock::now();
  Result r;
  r.name = name;
  for (auto* p : params) {
    p->zero_grad();
  }
  {
    Tape<T> tape;
    tape.backward(loss(tape));
  }
  std::vector<std::pair<std::size_t, std::size_t>> entries;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k]->value.numel(); ++i) {
      entries.emplace_back(k, i);
    }
  }
  if (entries.size() > samples) {
    rng.shuffle(std::span(entries));
    entries.resize(samples);
  }
  for (const auto& [k, i] : entries) {
    Parameter<T>& p = *params[k];
    const T original = p.value[i];
    p.value[i] = original + opts.step;
    const T plus = evaluate(loss);
    p.value[i] = original - opts.step;
    const T minus = evaluate(loss);
    p.value[i] = original;
    const double numeric = (plus - minus) / (2 * opts.step);
    const double err = relative_error(p.grad[i], numeric, opts.floor);
    if (err > r.max_error || r.worst.empty()) {
      r.max_error = err;
      r.worst = p.name + "[" + std::to_string(i) + "]";
    }
    ++r.checked;
  }
  r.passed = r.checked > 0 && r.max_error <= opts.tolerance;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<Result> run_suite(const Options& opts) {
  Rng rng = Rng(opts.seed).derive("gradcheck");
  std::vector<Result> results;
  for (auto& c : layer_cases(rng)) {
    // Move weights off their init values (zero biases, unit scales) so every
    // path carries a generic gradient.
    ParameterList<T> weights;
    for (auto* p : c.params) {
      if (p->name != "x" && p->name != "a" && p->name != "b" && p->name != "gate" && p->name != "img" &&
          p->name != "tokens" && p->name != "logits") {
        weights.push_back(p);
      }
    }
    randomize(weights, rng);
    results.push_back(check(c.name, c.params, c.loss, opts.samples, opts, rng));
  }

  if (!opts.include_model) {
    return results;
  }
  // End to end on the toy configuration with its real initialization.
  auto cfg = model::ModelConfig::toy();
  model::LdcsfModel<T> net(cfg, opts.seed);
  // The toy head sees a 1x1 grid, so its batch norm normalizes across the
  // batch alone. Images with distinct brightness keep those statistics well
  // separated; near-identical samples make the loss very steep there.
  constexpr std::size_t batch = 4;
  Tensor<T> images({batch, 3, cfg.img_size, cfg.img_size});
  const std::size_t per = images.numel() / batch;
  for (std::size_t b = 0; b < batch; ++b) {
    const double level = rng.uniform();
    for (std::size_t i = 0; i < per; ++i) {
      images[b * per + i] = level + rng.uniform() - 0.5;
    }
  }
  Tensor<T> targets({batch, kNumLabels});
  targets[0 * kNumLabels + kTumor] = 1;
  targets[1 * kNumLabels + kInterstitial] = 1;
  targets[1 * kNumLabels + kNonTumor] = 1;
  targets[2 * kNumLabels + kNecrosis] = 1;
  targets[3 * kNumLabels + kInterstitial] = 1;
  targets[3 * kNumLabels + kTumor] = 1;
  const LossFn loss = [&](Tape<T>& tape) {
    Rng drop = Rng(opts.seed).derive("dropout");
    const auto logits = net.forward(tape, tape.constant(images), &drop);
    return model::multilabel_loss(logits, targets).total;
  };
  results.push_back(check("toy model end to end", net.parameters(), loss, opts.model_samples, opts, rng));
  return results;
}

}  // namespace ldcsf::gradcheck
