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

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ldcsf/model.hpp"
#include "ldcsf/ops.hpp"
#include "test_util.hpp"

namespace ldcsf::model {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;

template <class T>
void zero(Parameter<T>& p) {
  p.value = Tensor<T>(p.value.shape());
}

ModelConfig tiny(bool ldc = true, bool fr = true) {
  ModelConfig cfg = ModelConfig::toy();
  cfg.ldc_enabled = ldc;
  cfg.fr_enabled = fr;
  return cfg;
}

TEST(ModelConfig, ToyValidates) {
  const ModelConfig cfg = ModelConfig::toy();
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.img_size, 32u);
  EXPECT_EQ(cfg.embed_dim, 8u);
  EXPECT_EQ(cfg.window, 2u);
}

TEST(ModelConfig, DefaultHeadsScale) {
  EXPECT_EQ(ModelConfig::scaled_heads(96), (std::array<std::size_t, 4>{3, 6, 12, 24}));
  EXPECT_NO_THROW(ModelConfig().validate());
}

TEST(ModelConfig, RejectsBadValues) {
  ModelConfig cfg;
  cfg.patch_size = 5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ModelConfig();
  cfg.depths[1] = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ModelConfig();
  cfg.heads[0] = 5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ModelConfig();
  cfg.num_labels = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = ModelConfig();
  cfg.dropout_rate = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ModelConfig, JsonRoundTrip) {
  ModelConfig cfg = ModelConfig::toy();
  cfg.fr_enabled = false;
  cfg.dropout_rate = 0.25;
  const ModelConfig back = ModelConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_TRUE(cfg.structural_diff(back).empty());
}

TEST(ModelConfig, JsonUnknownKey) {
  EXPECT_THROW(ModelConfig::from_json(nlohmann::json{{"embed_dimm", 8}}), ConfigError);
  EXPECT_THROW(ModelConfig::from_json(nlohmann::json{{"embed_dim", "eight"}}), ConfigError);
}

TEST(ModelConfig, StructuralDiffIgnoresDropout) {
  ModelConfig a = ModelConfig::toy();
  ModelConfig b = a;
  b.dropout_rate = 0.5;
  EXPECT_TRUE(a.structural_diff(b).empty());
  b.ldc_enabled = false;
  EXPECT_EQ(a.structural_diff(b), std::vector<std::string>{"ldc_enabled"});
}

TEST(PatchEmbed, EightByEightGivesFourTokens) {
  ModelConfig cfg = ModelConfig::toy();
  PatchEmbed<double> embed("embed", cfg, Rng(1));
  EXPECT_EQ(embed.proj.weight.value.shape(), (Shape{8, 48}));
  Rng rng(2);
  Tape<double> tape;
  const auto y = embed.forward(tape, tape.constant(random_tensor<double>({1, 3, 8, 8}, rng)));
  EXPECT_EQ(y.shape(), (Shape{1, 4, 8}));
}

TEST(PatchEmbed, FlattensPatchesChannelMajor) {
  ModelConfig cfg = ModelConfig::toy();
  PatchEmbed<double> embed("embed", cfg, Rng(1));
  // Route raw feature f to output channel 0 and read it back without norm.
  Tensor<double> img({1, 3, 8, 8});
  for (std::size_t i = 0; i < img.numel(); ++i) {
    img[i] = static_cast<double>(i);
  }
  zero(embed.proj.weight);
  zero(*embed.proj.bias);
  const std::size_t f = 1 * 16 + 2 * 4 + 3;  // channel 1, ky 2, kx 3
  embed.proj.weight.value[f] = 1.0;
  Tape<double> tape;
  const auto y = embed.forward(tape, tape.constant(img), false);
  // Token 1 is the patch at gy 0, gx 1.
  EXPECT_EQ(y.value()[1 * 8], img[(1 * 8 + 2) * 8 + 4 + 3]);
}

TEST(PatchEmbed, ConstantImageGivesIdenticalTokens) {
  PatchEmbed<double> embed("embed", ModelConfig::toy(), Rng(3));
  Tape<double> tape;
  const auto y = embed.forward(tape, tape.constant(Tensor<double>({1, 3, 8, 8}, 0.3)), false);
  for (std::size_t t = 1; t < 4; ++t) {
    for (std::size_t ch = 0; ch < 8; ++ch) {
      EXPECT_EQ(y.value()[t * 8 + ch], y.value()[ch]);
    }
  }
}

TEST(PatchEmbed, Errors) {
  PatchEmbed<double> embed("embed", ModelConfig::toy(), Rng(1));
  Tape<double> tape;
  EXPECT_THROW(embed.forward(tape, tape.constant(Tensor<double>({1, 4, 8, 8}))), ShapeError);
  EXPECT_THROW(embed.forward(tape, tape.constant(Tensor<double>({1, 3, 6, 8}))), ShapeError);
}

TEST(SwinBlock, ZeroProjectionsGiveIdentity) {
  for (const bool shifted : {false, true}) {
    SwinBlock<double> block("b", 8, 2, 2, shifted, 4, Rng(5));
    zero(block.attn.proj.weight);
    zero(*block.attn.proj.bias);
    zero(block.fc2.weight);
    zero(*block.fc2.bias);
    Rng rng(6);
    Tape<double> tape;
    const auto x = random_tensor<double>({2, 16, 8}, rng);
    EXPECT_EQ(block.forward(tape, tape.constant(x)).value(), x);
  }
}

TEST(SwinBlock, StageAlternatesShift) {
  LdcsfModel<double> model(ModelConfig::toy(), 1);
  for (const auto& stage : model.stages) {
    ASSERT_EQ(stage.blocks.size(), 2u);
    EXPECT_FALSE(stage.blocks[0].shifted());
    EXPECT_TRUE(stage.blocks[1].shifted());
    EXPECT_EQ(stage.blocks[1].shift(), 1u);
  }
}

TEST(SwinBlock, RejectsNonSquareGrid) {
  SwinBlock<double> block("b", 8, 2, 2, false, 4, Rng(5));
  Tape<double> tape;
  EXPECT_THROW(block.forward(tape, tape.constant(Tensor<double>({1, 12, 8}))), ShapeError);
}

TEST(SwinBlock, PadsGridNotDivisibleByWindow) {
  SwinBlock<double> block("b", 8, 2, 2, true, 4, Rng(5));
  Rng rng(7);
  Tape<double> tape;
  const auto y = block.forward(tape, tape.constant(random_tensor<double>({1, 9, 8}, rng)));
  EXPECT_EQ(y.shape(), (Shape{1, 9, 8}));
  EXPECT_TRUE(y.value().all_finite());
}

TEST(Ldc, ZeroWeightsGiveIdentity) {
  LdcModule<double> ldc("ldc", 8, 4, 3, Rng(1));
  zero(ldc.expand.weight);
  zero(ldc.project.weight);
  Rng rng(2);
  Tape<double> tape;
  const auto x = random_tensor<double>({2, 8, 4, 4}, rng);
  EXPECT_EQ(ldc.forward(tape, tape.constant(x), nn::Mode::kTrain).value(), x);
}

TEST(Ldc, ShapesFollowExpansion) {
  LdcModule<double> ldc("ldc", 8, 4, 3, Rng(1));
  EXPECT_EQ(ldc.expand.weight.value.shape(), (Shape{32, 8, 1, 1}));
  EXPECT_EQ(ldc.depthwise.weight.value.shape(), (Shape{32, 1, 3, 3}));
  EXPECT_EQ(ldc.project.weight.value.shape(), (Shape{8, 32, 1, 1}));
}

TEST(Fr, HalfGateHalvesMap) {
  FrModule<double> fr("fr", 8, 4, Rng(1));
  zero(fr.fc2.weight);
  zero(*fr.fc2.bias);
  Rng rng(2);
  Tape<double> tape;
  const auto x = random_tensor<double>({2, 8, 3, 3}, rng);
  const auto y = fr.forward(tape, tape.constant(x)).value();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(y[i], 0.5 * x[i]);
  }
}

TEST(Fr, SaturatedGateIsIdentity) {
  FrModule<double> fr("fr", 8, 4, Rng(1));
  zero(fr.fc2.weight);
  fr.fc2.bias->value = Tensor<double>({8}, 60.0);
  Rng rng(2);
  Tape<double> tape;
  const auto x = random_tensor<double>({1, 8, 2, 2}, rng);
  EXPECT_LT(max_abs_diff(fr.forward(tape, tape.constant(x)).value(), x), 1e-15);
}

TEST(Fr, SqueezeFeedsGate) {
  // One channel [[1,2],[3,4]]; with identity-ish excitation the gate input is 2.5.
  FrModule<double> fr("fr", 4, 4, Rng(1));
  zero(fr.fc1.weight);
  zero(*fr.fc1.bias);
  fr.fc1.weight.value[0] = 1.0;  // hidden = relu(squeeze of channel 0)
  zero(fr.fc2.weight);
  zero(*fr.fc2.bias);
  fr.fc2.weight.value[0] = 1.0;  // gate 0 = sigmoid(hidden)
  Tensor<double> x({1, 4, 2, 2}, 1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    x[i] = static_cast<double>(i + 1);
  }
  Tape<double> tape;
  const auto y = fr.forward(tape, tape.constant(x)).value();
  const double g = 1.0 / (1.0 + std::exp(-2.5));
  EXPECT_NEAR(y[3], 4.0 * g, 1e-15);
  EXPECT_EQ(y[4], 0.5);
}

TEST(Fr, PreservesSignPattern) {
  FrModule<double> fr("fr", 8, 4, Rng(3));
  Rng rng(4);
  Tape<double> tape;
  const auto x = random_tensor<double>({3, 8, 3, 3}, rng, -2.0, 2.0);
  const auto y = fr.forward(tape, tape.constant(x)).value();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(std::signbit(y[i]), std::signbit(x[i]));
    EXPECT_LT(std::abs(y[i]), std::abs(x[i]));
  }
}

TEST(Fr, RejectsIndivisibleDim) { EXPECT_THROW(FrModule<double>("fr", 6, 4, Rng(1)), ConfigError); }

TEST(PatchMerging, Shapes) {
  PatchMerging<double> merge("m", 8, Rng(1));
  Rng rng(2);
  Tape<double> tape;
  EXPECT_EQ(merge.forward(tape, tape.constant(random_tensor<double>({2, 16, 8}, rng))).shape(), (Shape{2, 4, 16}));
  EXPECT_EQ(merge.forward(tape, tape.constant(random_tensor<double>({1, 4, 8}, rng))).shape(), (Shape{1, 1, 16}));
  EXPECT_THROW(merge.forward(tape, tape.constant(Tensor<double>({1, 9, 8}))), ShapeError);
}

TEST(PatchMerging, NeighbourOrder) {
  // dim 1, 2x2 grid: merged vector is (x00, x10, x01, x11).
  PatchMerging<double> merge("m", 1, Rng(1));
  merge.norm.gamma.value = Tensor<double>({4}, 1.0);
  zero(merge.reduction.weight);
  merge.reduction.weight.value[0 * 4 + 1] = 1.0;  // out 0 <- slot 1
  Tape<double> tape;
  const auto y = merge.forward(tape, tape.constant(Tensor<double>({1, 4, 1}, {0, 1, 2, 3})));
  // Slot 1 holds token (1,0) = 2; normalized against {0,2,1,3}.
  const double mu = 1.5;
  const double sd = std::sqrt(1.25 + 1e-5);
  EXPECT_NEAR(y.value()[0], (2.0 - mu) / sd, 1e-12);
}

TEST(Head, ShapeAndZeroConvReduction) {
  ResnetHead<double> head("head", 8, 2, 4, 0.0, Rng(1));
  for (auto& unit : head.units) {
    zero(unit.conv1.weight);
    zero(unit.conv2.weight);
  }
  Rng rng(2);
  Tape<double> tape;
  const auto x = random_tensor<double>({3, 4, 8}, rng);
  const auto logits = head.forward(tape, tape.constant(x), nn::Mode::kTrain, nullptr);
  ASSERT_EQ(logits.shape(), (Shape{3, 4}));
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t o = 0; o < 4; ++o) {
      double acc = (*head.fc.bias).value[o];
      for (std::size_t c = 0; c < 8; ++c) {
        double pooled = 0.0;
        for (std::size_t t = 0; t < 4; ++t) {
          pooled += x[(b * 4 + t) * 8 + c];
        }
        acc += head.fc.weight.value[o * 8 + c] * pooled / 4.0;
      }
      EXPECT_NEAR(logits.value()[b * 4 + o], acc, 1e-12);
    }
  }
}

TEST(Head, TrainDropoutNeedsRng) {
  ResnetHead<double> head("head", 8, 2, 4, 0.1, Rng(1));
  Tape<double> tape;
  Rng rng(2);
  const auto x = tape.constant(random_tensor<double>({2, 4, 8}, rng));
  EXPECT_THROW(head.forward(tape, x, nn::Mode::kTrain, nullptr), ConfigError);
  EXPECT_EQ(head.forward(tape, x, nn::Mode::kTrain, &rng).shape(), (Shape{2, 4}));
}

TEST(Model, ShapeLadder) {
  for (const std::size_t img : {32u, 64u}) {
    ModelConfig cfg = ModelConfig::toy();
    cfg.img_size = img;
    LdcsfModel<float> model(cfg, 1);
    Rng rng(2);
    Tape<float> tape(false);
    ForwardTrace trace;
    const auto logits =
        model.forward(tape, tape.constant(random_tensor<float>({2, 3, img, img}, rng)), &rng, &trace);
    EXPECT_EQ(logits.shape(), (Shape{2, 4}));
    ASSERT_EQ(trace.stage_tokens.size(), 4u);
    for (std::size_t s = 0; s < 4; ++s) {
      const std::size_t side = img / (4u << s);
      EXPECT_EQ(trace.stage_tokens[s], (Shape{2, side * side, 8u << s}));
    }
  }
}

TEST(Model, RejectsWrongInput) {
  LdcsfModel<float> model(ModelConfig::toy(), 1);
  Tape<float> tape;
  EXPECT_THROW(model.forward(tape, tape.constant(Tensor<float>({1, 3, 16, 16}))), ShapeError);
  EXPECT_THROW(model.forward(tape, tape.constant(Tensor<float>({3, 32, 32}))), ShapeError);
}

TEST(Model, LocalModulesOnlyInFirstThreeStages) {
  LdcsfModel<float> model(ModelConfig::toy(), 1);
  for (std::size_t s = 0; s < 3; ++s) {
    EXPECT_TRUE(model.stages[s].ldc.has_value());
    EXPECT_TRUE(model.stages[s].fr.has_value());
    EXPECT_TRUE(model.stages[s].merge.has_value());
  }
  EXPECT_FALSE(model.stages[3].ldc || model.stages[3].fr || model.stages[3].merge);
  // Native stage widths.
  EXPECT_EQ(model.stages[2].ldc->expand.weight.value.shape(), (Shape{128, 32, 1, 1}));
}

std::set<std::string> names(LdcsfModel<float>& model) {
  std::set<std::string> out;
  for (const auto* p : model.parameters()) {
    out.insert(p->name);
  }
  return out;
}

TEST(Model, AblationParameterSubset) {
  LdcsfModel<float> full(tiny(), 1);
  LdcsfModel<float> base(tiny(false, false), 1);
  LdcsfModel<float> ldc_only(tiny(true, false), 1);
  const auto f = names(full);
  const auto b = names(base);
  const auto l = names(ldc_only);
  EXPECT_TRUE(std::includes(f.begin(), f.end(), b.begin(), b.end()));
  EXPECT_LT(b.size(), l.size());
  EXPECT_LT(l.size(), f.size());
  EXPECT_EQ(full.parameters().size(), f.size());
  for (const auto& name : f) {
    if (!b.contains(name)) {
      EXPECT_TRUE(name.find(".ldc.") != std::string::npos || name.find(".fr.") != std::string::npos) << name;
    }
  }
}

TEST(Model, SharedParametersInitIdentically) {
  LdcsfModel<float> full(tiny(), 9);
  LdcsfModel<float> base(tiny(false, false), 9);
  std::map<std::string, const Tensor<float>*> by_name;
  for (const auto* p : full.parameters()) {
    by_name[p->name] = &p->value;
  }
  for (const auto* p : base.parameters()) {
    EXPECT_EQ(*by_name.at(p->name), p->value) << p->name;
  }
}

TEST(Model, AblationChangesOutput) {
  LdcsfModel<double> full(tiny(), 1);
  LdcsfModel<double> base(tiny(false, false), 1);
  full.set_mode(nn::Mode::kEval);
  base.set_mode(nn::Mode::kEval);
  Rng rng(3);
  const auto x = random_tensor<double>({2, 3, 32, 32}, rng);
  // Eval-mode batch norm needs running statistics.
  {
    Tape<double> t(false);
    full.set_mode(nn::Mode::kTrain);
    Rng drop(4);
    full.forward(t, t.constant(x), &drop);
    full.set_mode(nn::Mode::kEval);
    base.set_mode(nn::Mode::kTrain);
    base.forward(t, t.constant(x), &drop);
    base.set_mode(nn::Mode::kEval);
  }
  Tape<double> tape(false);
  const auto a = full.forward(tape, tape.constant(x)).value();
  const auto b = base.forward(tape, tape.constant(x)).value();
  EXPECT_GT(max_abs_diff(a, b), 0.0);
}

TEST(Model, BatchEquivarianceInEval) {
  LdcsfModel<double> model(ModelConfig::toy(), 2);
  Rng rng(5);
  const auto x = random_tensor<double>({3, 3, 32, 32}, rng);
  {
    Tape<double> t(false);
    Rng drop(1);
    model.forward(t, t.constant(x), &drop);
  }
  model.set_mode(nn::Mode::kEval);
  const std::size_t per = 3 * 32 * 32;
  Tensor<double> permuted(x.shape());
  const std::size_t order[3] = {2, 0, 1};
  for (std::size_t b = 0; b < 3; ++b) {
    std::copy_n(x.data().begin() + order[b] * per, per, permuted.data().begin() + b * per);
  }
  Tape<double> tape(false);
  const auto y = model.forward(tape, tape.constant(x)).value();
  const auto yp = model.forward(tape, tape.constant(permuted)).value();
  for (std::size_t b = 0; b < 3; ++b) {
    for (std::size_t o = 0; o < 4; ++o) {
      EXPECT_NEAR(yp[b * 4 + o], y[order[b] * 4 + o], 1e-12);
    }
  }
}

TEST(Model, ToyForwardBackwardReachesEveryParameter) {
  LdcsfModel<float> model(ModelConfig::toy(), 3);
  auto params = model.parameters();
  for (auto* p : params) {
    p->zero_grad();
  }
  Rng rng(1);
  Tape<float> tape;
  const auto logits = model.forward(tape, tape.constant(random_tensor<float>({2, 3, 32, 32}, rng)), &rng);
  const auto loss = multilabel_loss(logits, Tensor<float>({2, 4}, {1, 0, 0, 1, 0, 1, 1, 0}));
  tape.backward(loss.total);
  std::size_t touched = 0;
  for (const auto* p : params) {
    for (const float g : p->grad.data()) {
      if (g != 0.0f) {
        ++touched;
        break;
      }
    }
  }
  // Zero-init biases feeding bias-free BN are the only ones allowed to stay flat.
  EXPECT_GT(touched, params.size() * 9 / 10);
}

TEST(Loss, UniformLogitsGiveLn2) {
  Tape<double> tape;
  const auto logits = tape.constant(Tensor<double>({3, 4}));
  const auto loss = multilabel_loss(logits, Tensor<double>({3, 4}, {1, 0, 0, 0, 0, 1, 1, 0, 1, 1, 1, 1}));
  for (const double l : {loss.values.interstitial, loss.values.non_tumor, loss.values.tumor, loss.values.necrosis}) {
    EXPECT_NEAR(l, std::log(2.0), 1e-15);
  }
  EXPECT_NEAR(loss.values.total, 4.0 * std::log(2.0), 1e-6);
}

TEST(Loss, ConfidentCorrectLogits) {
  const Tensor<double> targets({2, 4}, {1, 0, 1, 0, 0, 0, 1, 1});
  Tensor<double> logits(targets.shape());
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    logits[i] = targets[i] > 0 ? 20.0 : -20.0;
  }
  Tape<double> tape;
  EXPECT_LT(multilabel_loss(tape.constant(logits), targets).values.total, 1e-6);
}

TEST(Loss, DecompositionIsExact) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Tape<float> tape;
    const auto logits = tape.constant(random_tensor<float>({5, 4}, rng, -4.0f, 4.0f));
    Tensor<float> targets({5, 4});
    for (std::size_t i = 0; i < targets.numel(); ++i) {
      targets[i] = static_cast<float>(rng.below(2));
    }
    const auto loss = multilabel_loss(logits, targets);
    const auto& v = loss.values;
    EXPECT_EQ(v.total - (v.interstitial + v.non_tumor + v.tumor + v.necrosis), 0.0);
    EXPECT_GE(v.interstitial, 0.0);
    EXPECT_GE(v.necrosis, 0.0);
  }
}

TEST(Loss, PerLabelSeparability) {
  Rng rng(9);
  Tape<double> tape;
  const auto logits = tape.leaf(random_tensor<double>({3, 4}, rng));
  const auto loss = multilabel_loss(logits, Tensor<double>({3, 4}, {1, 0, 1, 0, 0, 1, 1, 0, 1, 1, 0, 0}));
  tape.backward(loss.per_label[kTumor]);
  const auto g = tape.grad(logits);
  for (std::size_t b = 0; b < 3; ++b) {
    EXPECT_EQ(g[b * 4 + kNonTumor], 0.0);
    EXPECT_EQ(g[b * 4 + kInterstitial], 0.0);
    EXPECT_NE(g[b * 4 + kTumor], 0.0);
  }
}

TEST(Loss, RejectsBadTargets) {
  Tape<double> tape;
  const auto logits = tape.constant(Tensor<double>({1, 4}));
  EXPECT_THROW(multilabel_loss(logits, Tensor<double>({1, 4}, {0.5, 0, 0, 0})), ShapeError);
  EXPECT_THROW(multilabel_loss(logits, Tensor<double>({1, 3})), ShapeError);
}

}  // namespace
}  // namespace ldcsf::model
