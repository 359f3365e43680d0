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

#ifndef LDCSF_MODEL_HPP
#define LDCSF_MODEL_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldcsf/attention.hpp"
#include "ldcsf/labels.hpp"
#include "ldcsf/nn.hpp"

namespace ldcsf::model {

inline constexpr std::size_t kNumStages = 4;

/// Network hyperparameters. Stage i (0-based) runs on a grid of
/// img_size / patch_size / 2^i tokens per side with embed_dim * 2^i channels.
struct ModelConfig {
  std::size_t img_size = 224;
  std::size_t patch_size = 4;
  std::size_t in_channels = 3;
  std::size_t embed_dim = 96;
  std::array<std::size_t, kNumStages> depths{2, 2, 2, 2};
  std::array<std::size_t, kNumStages> heads{3, 6, 12, 24};
  std::size_t window = 7;
  std::size_t mlp_ratio = 4;
  bool ldc_enabled = true;
  bool fr_enabled = true;
  std::size_t fr_reduction = 4;
  std::size_t ldc_kernel = 3;
  std::size_t ldc_expansion = 4;
  std::size_t num_labels = kNumLabels;
  double dropout_rate = 0.1;

  // embed_dim * 2^i / 32 heads per stage, at least one.
  static std::array<std::size_t, kNumStages> scaled_heads(std::size_t embed_dim);
  // img 32, patch 4, C=8, M=2, depths {2,2,2,2}.
  static ModelConfig toy();

  std::size_t grid(std::size_t stage) const { return img_size / patch_size >> stage; }
  std::size_t dim(std::size_t stage) const { return embed_dim << stage; }

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static ModelConfig from_json(const nlohmann::json& j);
  // Names of fields whose values change parameter shapes or the parameter set.
  std::vector<std::string> structural_diff(const ModelConfig& other) const;
};

/// Non-overlapping p x p patches flattened (c, y, x) and projected to C, then
/// layer-normalized.
template <class T>
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(const std::string& name, const ModelConfig& cfg, const Rng& rng);

  // [N,3,H,W] -> [N,(H/p)*(W/p),C]
  Var<T> forward(Tape<T>& tape, const Var<T>& images, bool apply_norm = true);
  void collect(ParameterList<T>& params);

  nn::Linear<T> proj;
  nn::LayerNorm<T> norm;

 private:
  std::size_t patch_ = 4;
  std::size_t in_channels_ = 3;
};

/// x <- x + (S)W-MSA(LN(x)); x <- x + MLP(LN(x)).
template <class T>
class SwinBlock {
 public:
  SwinBlock() = default;
  SwinBlock(const std::string& name, std::size_t dim, std::size_t heads, std::size_t window, bool shifted,
            std::size_t mlp_ratio, const Rng& rng);

  // tokens [N, side*side, dim]
  Var<T> forward(Tape<T>& tape, const Var<T>& tokens);
  void collect(ParameterList<T>& params);

  bool shifted() const { return shift_ > 0; }
  std::size_t shift() const { return shift_; }

  nn::LayerNorm<T> norm1;
  attn::WindowAttention<T> attn;
  nn::LayerNorm<T> norm2;
  nn::Linear<T> fc1;
  nn::Linear<T> fc2;

 private:
  std::size_t window_ = 7;
  std::size_t shift_ = 0;
};

/// Local depthwise-convolution feedforward on a feature map:
/// 1x1 expand + BN + H_Swish, k x k depthwise + BN + H_Swish,
/// 1x1 project + BN, plus the input.
template <class T>
class LdcModule {
 public:
  LdcModule() = default;
  LdcModule(const std::string& name, std::size_t dim, std::size_t expansion, std::size_t kernel, const Rng& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& fmap, nn::Mode mode);
  void collect(ParameterList<T>& params);
  void collect_buffers(nn::BufferList<T>& buffers);

  nn::Conv2d<T> expand;
  nn::BatchNorm2d<T> bn_expand;
  nn::DepthwiseConv2d<T> depthwise;
  nn::BatchNorm2d<T> bn_depthwise;
  nn::Conv2d<T> project;
  nn::BatchNorm2d<T> bn_project;
};

/// Feature reconstruction: squeeze (global average pool), excitation
/// (dim -> dim/r, ReLU, dim/r -> dim, sigmoid), channel-wise reweight.
template <class T>
class FrModule {
 public:
  FrModule() = default;
  FrModule(const std::string& name, std::size_t dim, std::size_t reduction, const Rng& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& fmap);
  // Excitation output [N, dim] for a squeezed [N, dim] input.
  Var<T> gate(Tape<T>& tape, const Var<T>& squeezed);
  void collect(ParameterList<T>& params);

  nn::Linear<T> fc1;
  nn::Linear<T> fc2;
};

/// Concatenates each 2x2 token neighbourhood (4*dim), layer-normalizes and
/// projects to 2*dim.
template <class T>
class PatchMerging {
 public:
  PatchMerging() = default;
  PatchMerging(const std::string& name, std::size_t dim, const Rng& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& tokens);
  void collect(ParameterList<T>& params);

  nn::LayerNorm<T> norm;
  nn::Linear<T> reduction;
};

/// Identity-skip unit: x + ReLU(BN(conv(ReLU(BN(conv(x)))))), 3x3 convs.
template <class T>
class ResidualUnit {
 public:
  ResidualUnit() = default;
  ResidualUnit(const std::string& name, std::size_t channels, const Rng& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& fmap, nn::Mode mode);
  void collect(ParameterList<T>& params);
  void collect_buffers(nn::BufferList<T>& buffers);

  nn::Conv2d<T> conv1;
  nn::BatchNorm2d<T> bn1;
  nn::Conv2d<T> conv2;
  nn::BatchNorm2d<T> bn2;
};

/// Classification head: residual units, global average pool, dropout,
/// linear to one logit per label.
template <class T>
class ResnetHead {
 public:
  ResnetHead() = default;
  ResnetHead(const std::string& name, std::size_t channels, std::size_t num_units, std::size_t num_labels,
             double dropout_rate, const Rng& rng);

  // tokens [N, side*side, channels] -> logits [N, num_labels]
  Var<T> forward(Tape<T>& tape, const Var<T>& tokens, nn::Mode mode, Rng* dropout_rng);
  void collect(ParameterList<T>& params);
  void collect_buffers(nn::BufferList<T>& buffers);

  std::vector<ResidualUnit<T>> units;
  nn::Linear<T> fc;

 private:
  double dropout_rate_ = 0.0;
};

// [N, side*side, C] <-> [N, C, side, side]
template <class T>
Var<T> seq_to_img(const Var<T>& tokens);
template <class T>
Var<T> img_to_seq(const Var<T>& fmap);

template <class T>
struct Stage {
  std::vector<SwinBlock<T>> blocks;
  std::optional<LdcModule<T>> ldc;
  std::optional<FrModule<T>> fr;
  std::optional<PatchMerging<T>> merge;  // applied after the stage
};

/// Token shapes observed at the end of every stage (before merging).
struct ForwardTrace {
  std::vector<Shape> stage_tokens;
};

template <class T>
class LdcsfModel {
 public:
  // Parameters are drawn from streams derived from (seed, parameter name).
  LdcsfModel(const ModelConfig& cfg, std::uint64_t seed);

  // images [N, 3, img, img] -> logits [N, num_labels]. Train mode with
  // dropout needs `dropout_rng`.
  Var<T> forward(Tape<T>& tape, const Var<T>& images, Rng* dropout_rng = nullptr, ForwardTrace* trace = nullptr);

  void set_mode(nn::Mode mode) { mode_ = mode; }
  nn::Mode mode() const { return mode_; }
  const ModelConfig& config() const { return cfg_; }

  // Stable order: embedding, stages (blocks, ldc, fr, merge), head.
  ParameterList<T> parameters();
  nn::BufferList<T> buffers();

  PatchEmbed<T> embed;
  std::vector<Stage<T>> stages;
  ResnetHead<T> head;

 private:
  ModelConfig cfg_;
  nn::Mode mode_ = nn::Mode::kTrain;
};

/// Per-label binary cross-entropy terms and their sum, as doubles. `total` is
/// interstitial + non_tumor + tumor + necrosis evaluated in that order.
struct MultiLabelLoss {
  double interstitial = 0.0;  // l_i
  double non_tumor = 0.0;     // l_m
  double tumor = 0.0;         // l_t
  double necrosis = 0.0;      // l_n
  double total = 0.0;         // L

  static double sum_of(double li, double lm, double lt, double ln) { return ((li + lm) + lt) + ln; }
};

template <class T>
struct LossTerms {
  Var<T> total;                                // differentiable L
  std::array<Var<T>, kNumLabels> per_label;   // indexed by Label
  MultiLabelLoss values;
};

// logits [N,4], targets [N,4] multi-hot in {0,1}.
template <class T>
LossTerms<T> multilabel_loss(const Var<T>& logits, const Tensor<T>& targets);

}  // namespace ldcsf::model

#endif  // LDCSF_MODEL_HPP
