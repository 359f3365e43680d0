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

#include "ldcsf/model.hpp"

#include <cmath>
#include <set>

namespace ldcsf::model {
namespace {

std::size_t square_side(std::size_t tokens, const char* op) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
  if (side * side != tokens) {
    throw ShapeError(std::string(op) + ": token count " + std::to_string(tokens) + " is not a square grid");
  }
  return side;
}

void require_tokens(const Shape& shape, const char* op) {
  if (shape.size() != 3) {
    throw ShapeError(std::string(op) + ": expected [N,L,C] tokens, got " + shape_str(shape));
  }
}

std::string join(const std::string& a, const std::string& b) { return a + "." + b; }

}  // namespace

// ---------------------------------------------------------------------------
// ModelConfig

std::array<std::size_t, kNumStages> ModelConfig::scaled_heads(std::size_t embed_dim) {
  std::array<std::size_t, kNumStages> heads{};
  for (std::size_t i = 0; i < kNumStages; ++i) {
    heads[i] = std::max<std::size_t>(1, (embed_dim << i) / 32);
  }
  return heads;
}

ModelConfig ModelConfig::toy() {
  ModelConfig cfg;
  cfg.img_size = 32;
  cfg.patch_size = 4;
  cfg.embed_dim = 8;
  cfg.window = 2;
  cfg.depths = {2, 2, 2, 2};
  cfg.heads = scaled_heads(cfg.embed_dim);
  return cfg;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (img_size == 0 || patch_size == 0 || img_size % patch_size != 0) {
    fail("patch_size must divide img_size");
  }
  if (in_channels == 0) {
    fail("in_channels must be positive");
  }
  const std::size_t base = img_size / patch_size;
  if (base % (std::size_t{1} << (kNumStages - 1)) != 0) {
    fail("img_size / patch_size must be divisible by 8 so every patch merge sees an even grid");
  }
  if (embed_dim == 0 || window == 0 || mlp_ratio == 0 || ldc_expansion == 0) {
    fail("embed_dim, window, mlp_ratio and ldc_expansion must be positive");
  }
  for (std::size_t i = 0; i < kNumStages; ++i) {
    if (depths[i] == 0 || depths[i] % 2 != 0) {
      fail("stage depths must be positive and even (W-MSA / SW-MSA pairs)");
    }
    if (heads[i] == 0 || dim(i) % heads[i] != 0) {
      fail("stage " + std::to_string(i) + " dim " + std::to_string(dim(i)) + " not divisible by " +
           std::to_string(heads[i]) + " heads");
    }
    if (fr_enabled && i + 1 < kNumStages && (fr_reduction == 0 || dim(i) % fr_reduction != 0)) {
      fail("fr_reduction must divide every stage dim");
    }
  }
  if (ldc_kernel % 2 == 0) {
    fail("ldc_kernel must be odd");
  }
  if (num_labels != kNumLabels) {
    fail("num_labels is fixed at 4");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    fail("dropout_rate must lie in [0, 1)");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"img_size", img_size},
                        {"patch_size", patch_size},
                        {"in_channels", in_channels},
                        {"embed_dim", embed_dim},
                        {"depths", depths},
                        {"heads", heads},
                        {"window", window},
                        {"mlp_ratio", mlp_ratio},
                        {"ldc_enabled", ldc_enabled},
                        {"fr_enabled", fr_enabled},
                        {"fr_reduction", fr_reduction},
                        {"ldc_kernel", ldc_kernel},
                        {"ldc_expansion", ldc_expansion},
                        {"num_labels", num_labels},
                        {"dropout_rate", dropout_rate}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKnown = {
      "img_size",     "patch_size", "in_channels", "embed_dim",  "depths",        "heads",      "window",
      "mlp_ratio",    "ldc_enabled", "fr_enabled", "fr_reduction", "ldc_kernel", "ldc_expansion", "num_labels",
      "dropout_rate"};
  if (!j.is_object()) {
    throw ConfigError("model config must be a JSON object");
  }
  for (const auto& [key, _] : j.items()) {
    if (!kKnown.contains(key)) {
      throw ConfigError("model config: unknown key '" + key + "'");
    }
  }
  ModelConfig cfg;
  try {
    cfg.img_size = j.value("img_size", cfg.img_size);
    cfg.patch_size = j.value("patch_size", cfg.patch_size);
    cfg.in_channels = j.value("in_channels", cfg.in_channels);
    cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
    cfg.depths = j.value("depths", cfg.depths);
    // Heads follow embed_dim unless given explicitly.
    cfg.heads = j.contains("heads") ? j.at("heads").get<std::array<std::size_t, kNumStages>>()
                                    : scaled_heads(cfg.embed_dim);
    cfg.window = j.value("window", cfg.window);
    cfg.mlp_ratio = j.value("mlp_ratio", cfg.mlp_ratio);
    cfg.ldc_enabled = j.value("ldc_enabled", cfg.ldc_enabled);
    cfg.fr_enabled = j.value("fr_enabled", cfg.fr_enabled);
    cfg.fr_reduction = j.value("fr_reduction", cfg.fr_reduction);
    cfg.ldc_kernel = j.value("ldc_kernel", cfg.ldc_kernel);
    cfg.ldc_expansion = j.value("ldc_expansion", cfg.ldc_expansion);
    cfg.num_labels = j.value("num_labels", cfg.num_labels);
    cfg.dropout_rate = j.value("dropout_rate", cfg.dropout_rate);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return cfg;
}

std::vector<std::string> ModelConfig::structural_diff(const ModelConfig& other) const {
  const nlohmann::json a = to_json();
  const nlohmann::json b = other.to_json();
  std::vector<std::string> diff;
  for (const auto& [key, value] : a.items()) {
    if (key != "dropout_rate" && b.at(key) != value) {
      diff.push_back(key);
    }
  }
  return diff;
}

// ---------------------------------------------------------------------------
// Reshapes

template <class T>
Var<T> seq_to_img(const Var<T>& tokens) {
  require_tokens(tokens.shape(), "seq_to_img");
  const std::size_t n = tokens.dim(0);
  const std::size_t c = tokens.dim(2);
  const std::size_t side = square_side(tokens.dim(1), "seq_to_img");
  return reshape(permute(tokens, {0, 2, 1}), {n, c, side, side});
}

template <class T>
Var<T> img_to_seq(const Var<T>& fmap) {
  if (fmap.shape().size() != 4 || fmap.dim(2) != fmap.dim(3)) {
    throw ShapeError("img_to_seq: expected square [N,C,H,W], got " + shape_str(fmap.shape()));
  }
  const std::size_t n = fmap.dim(0);
  const std::size_t c = fmap.dim(1);
  return permute(reshape(fmap, {n, c, fmap.dim(2) * fmap.dim(3)}), {0, 2, 1});
}

// ---------------------------------------------------------------------------
// PatchEmbed

template <class T>
PatchEmbed<T>::PatchEmbed(const std::string& name, const ModelConfig& cfg, const Rng& rng)
    : proj(join(name, "proj"), cfg.in_channels * cfg.patch_size * cfg.patch_size, cfg.embed_dim, true, rng),
      norm(join(name, "norm"), cfg.embed_dim),
      patch_(cfg.patch_size),
      in_channels_(cfg.in_channels) {}

template <class T>
Var<T> PatchEmbed<T>::forward(Tape<T>& tape, const Var<T>& images, bool apply_norm) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != in_channels_) {
    throw ShapeError("patch_embed: expected [N," + std::to_string(in_channels_) + ",H,W], got " + shape_str(s));
  }
  if (s[2] % patch_ != 0 || s[3] % patch_ != 0) {
    throw ShapeError("patch_embed: image side not divisible by patch size " + std::to_string(patch_));
  }
  const std::size_t n = s[0];
  const std::size_t height = s[2];
  const std::size_t width = s[3];
  const std::size_t gh = height / patch_;
  const std::size_t gw = width / patch_;
  const std::size_t feat = in_channels_ * patch_ * patch_;
  auto index = std::make_shared<std::vector<std::int64_t>>(n * gh * gw * feat);
  std::size_t out = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t gy = 0; gy < gh; ++gy) {
      for (std::size_t gx = 0; gx < gw; ++gx) {
        for (std::size_t c = 0; c < in_channels_; ++c) {
          for (std::size_t ky = 0; ky < patch_; ++ky) {
            for (std::size_t kx = 0; kx < patch_; ++kx) {
              (*index)[out++] = static_cast<std::int64_t>(((b * in_channels_ + c) * height + gy * patch_ + ky) * width +
                                                          gx * patch_ + kx);
            }
          }
        }
      }
    }
  }
  const Var<T> patches = gather(images, index, {n, gh * gw, feat});
  const Var<T> projected = proj.forward(tape, patches);
  return apply_norm ? norm.forward(tape, projected) : projected;
}

template <class T>
void PatchEmbed<T>::collect(ParameterList<T>& params) {
  proj.collect(params);
  norm.collect(params);
}

// ---------------------------------------------------------------------------
// SwinBlock

template <class T>
SwinBlock<T>::SwinBlock(const std::string& name, std::size_t dim, std::size_t heads, std::size_t window, bool shifted,
                        std::size_t mlp_ratio, const Rng& rng)
    : norm1(join(name, "norm1"), dim),
      attn(join(name, "attn"), dim, window, heads, rng),
      norm2(join(name, "norm2"), dim),
      fc1(join(name, "mlp.fc1"), dim, mlp_ratio * dim, true, rng),
      fc2(join(name, "mlp.fc2"), mlp_ratio * dim, dim, true, rng),
      window_(window),
      shift_(shifted ? window / 2 : 0) {}

template <class T>
Var<T> SwinBlock<T>::forward(Tape<T>& tape, const Var<T>& tokens) {
  require_tokens(tokens.shape(), "swin_block");
  const std::size_t n = tokens.dim(0);
  const std::size_t c = tokens.dim(2);
  const std::size_t side = square_side(tokens.dim(1), "swin_block");
  const std::size_t padded = (side + window_ - 1) / window_ * window_;

  Var<T> x = reshape(norm1.forward(tape, tokens), {n, side, side, c});
  x = attn::pad_grid(x, padded, padded);
  x = attn::cyclic_shift(x, shift_);
  const Var<T> windows = attn::window_partition(x, window_);
  std::optional<Tensor<T>> mask;
  if (shift_ > 0) {
    mask = attn::build_shift_mask<T>(padded, padded, window_, shift_);
  }
  const Var<T> attended = attn.forward(tape, windows, mask ? &*mask : nullptr).out;
  x = attn::window_reverse(attended, window_, padded, padded);
  x = attn::cyclic_unshift(x, shift_);
  x = attn::crop_grid(x, side, side);
  x = add(tokens, reshape(x, tokens.shape()));

  const Var<T> hidden = nn::gelu(fc1.forward(tape, norm2.forward(tape, x)));
  return add(x, fc2.forward(tape, hidden));
}

template <class T>
void SwinBlock<T>::collect(ParameterList<T>& params) {
  norm1.collect(params);
  attn.collect(params);
  norm2.collect(params);
  fc1.collect(params);
  fc2.collect(params);
}

// ---------------------------------------------------------------------------
// LdcModule

template <class T>
LdcModule<T>::LdcModule(const std::string& name, std::size_t dim, std::size_t expansion, std::size_t kernel,
                        const Rng& rng)
    : expand(join(name, "expand"), dim, expansion * dim, 1, false, rng),
      bn_expand(join(name, "bn_expand"), expansion * dim),
      depthwise(join(name, "depthwise"), expansion * dim, kernel, false, rng),
      bn_depthwise(join(name, "bn_depthwise"), expansion * dim),
      project(join(name, "project"), expansion * dim, dim, 1, false, rng),
      bn_project(join(name, "bn_project"), dim) {}

template <class T>
Var<T> LdcModule<T>::forward(Tape<T>& tape, const Var<T>& fmap, nn::Mode mode) {
  Var<T> y = nn::h_swish(bn_expand.forward(tape, expand.forward(tape, fmap), mode));
  y = nn::h_swish(bn_depthwise.forward(tape, depthwise.forward(tape, y), mode));
  y = bn_project.forward(tape, project.forward(tape, y), mode);
  return add(fmap, y);
}

template <class T>
void LdcModule<T>::collect(ParameterList<T>& params) {
  expand.collect(params);
  bn_expand.collect(params);
  depthwise.collect(params);
  bn_depthwise.collect(params);
  project.collect(params);
  bn_project.collect(params);
}

template <class T>
void LdcModule<T>::collect_buffers(nn::BufferList<T>& buffers) {
  bn_expand.collect_buffers(buffers);
  bn_depthwise.collect_buffers(buffers);
  bn_project.collect_buffers(buffers);
}

// ---------------------------------------------------------------------------
// FrModule

template <class T>
FrModule<T>::FrModule(const std::string& name, std::size_t dim, std::size_t reduction, const Rng& rng)
    : fc1(join(name, "fc1"), dim, dim / reduction, true, rng), fc2(join(name, "fc2"), dim / reduction, dim, true, rng) {
  if (reduction == 0 || dim % reduction != 0) {
    throw ConfigError("fr: dim " + std::to_string(dim) + " not divisible by reduction " + std::to_string(reduction));
  }
}

template <class T>
Var<T> FrModule<T>::gate(Tape<T>& tape, const Var<T>& squeezed) {
  return nn::sigmoid(fc2.forward(tape, nn::relu(fc1.forward(tape, squeezed))));
}

template <class T>
Var<T> FrModule<T>::forward(Tape<T>& tape, const Var<T>& fmap) {
  return nn::mul_channel(fmap, gate(tape, nn::global_avg_pool(fmap)));
}

template <class T>
void FrModule<T>::collect(ParameterList<T>& params) {
  fc1.collect(params);
  fc2.collect(params);
}

// ---------------------------------------------------------------------------
// PatchMerging

template <class T>
PatchMerging<T>::PatchMerging(const std::string& name, std::size_t dim, const Rng& rng)
    : norm(join(name, "norm"), 4 * dim), reduction(join(name, "reduction"), 4 * dim, 2 * dim, false, rng) {}

template <class T>
Var<T> PatchMerging<T>::forward(Tape<T>& tape, const Var<T>& tokens) {
  require_tokens(tokens.shape(), "patch_merging");
  const std::size_t n = tokens.dim(0);
  const std::size_t c = tokens.dim(2);
  const std::size_t side = square_side(tokens.dim(1), "patch_merging");
  if (side % 2 != 0) {
    throw ShapeError("patch_merging: grid side " + std::to_string(side) + " is odd");
  }
  const std::size_t half = side / 2;
  // Neighbour order (dy, dx): (0,0), (1,0), (0,1), (1,1).
  constexpr std::size_t kOffsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  auto index = std::make_shared<std::vector<std::int64_t>>(n * half * half * 4 * c);
  std::size_t out = 0;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < half; ++i) {
      for (std::size_t j = 0; j < half; ++j) {
        for (const auto& off : kOffsets) {
          const std::size_t src = ((b * side + 2 * i + off[0]) * side + 2 * j + off[1]) * c;
          for (std::size_t ch = 0; ch < c; ++ch) {
            (*index)[out++] = static_cast<std::int64_t>(src + ch);
          }
        }
      }
    }
  }
  const Var<T> merged = gather(tokens, index, {n, half * half, 4 * c});
  return reduction.forward(tape, norm.forward(tape, merged));
}

template <class T>
void PatchMerging<T>::collect(ParameterList<T>& params) {
  norm.collect(params);
  reduction.collect(params);
}

// ---------------------------------------------------------------------------
// Head

template <class T>
ResidualUnit<T>::ResidualUnit(const std::string& name, std::size_t channels, const Rng& rng)
    : conv1(join(name, "conv1"), channels, channels, 3, false, rng),
      bn1(join(name, "bn1"), channels),
      conv2(join(name, "conv2"), channels, channels, 3, false, rng),
      bn2(join(name, "bn2"), channels) {}

template <class T>
Var<T> ResidualUnit<T>::forward(Tape<T>& tape, const Var<T>& fmap, nn::Mode mode) {
  Var<T> y = nn::relu(bn1.forward(tape, conv1.forward(tape, fmap), mode));
  y = nn::relu(bn2.forward(tape, conv2.forward(tape, y), mode));
  return add(fmap, y);
}

template <class T>
void ResidualUnit<T>::collect(ParameterList<T>& params) {
  conv1.collect(params);
  bn1.collect(params);
  conv2.collect(params);
  bn2.collect(params);
}

template <class T>
void ResidualUnit<T>::collect_buffers(nn::BufferList<T>& buffers) {
  bn1.collect_buffers(buffers);
  bn2.collect_buffers(buffers);
}

template <class T>
ResnetHead<T>::ResnetHead(const std::string& name, std::size_t channels, std::size_t num_units,
                          std::size_t num_labels, double dropout_rate, const Rng& rng)
    : fc(join(name, "fc"), channels, num_labels, true, rng), dropout_rate_(dropout_rate) {
  for (std::size_t u = 0; u < num_units; ++u) {
    units.emplace_back(join(name, "units." + std::to_string(u)), channels, rng);
  }
}

template <class T>
Var<T> ResnetHead<T>::forward(Tape<T>& tape, const Var<T>& tokens, nn::Mode mode, Rng* dropout_rng) {
  Var<T> fmap = seq_to_img(tokens);
  for (auto& unit : units) {
    fmap = unit.forward(tape, fmap, mode);
  }
  Var<T> pooled = nn::global_avg_pool(fmap);
  if (mode == nn::Mode::kTrain && dropout_rate_ > 0.0) {
    if (dropout_rng == nullptr) {
      throw ConfigError("resnet_head: train-mode dropout needs a random stream");
    }
    pooled = nn::dropout(pooled, static_cast<T>(dropout_rate_), mode, *dropout_rng);
  }
  return fc.forward(tape, pooled);
}

template <class T>
void ResnetHead<T>::collect(ParameterList<T>& params) {
  for (auto& unit : units) {
    unit.collect(params);
  }
  fc.collect(params);
}

template <class T>
void ResnetHead<T>::collect_buffers(nn::BufferList<T>& buffers) {
  for (auto& unit : units) {
    unit.collect_buffers(buffers);
  }
}

// ---------------------------------------------------------------------------
// LdcsfModel

template <class T>
LdcsfModel<T>::LdcsfModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const Rng rng = Rng(seed).derive("init");
  embed = PatchEmbed<T>("embed", cfg_, rng);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const std::string prefix = "stages." + std::to_string(s);
    Stage<T> stage;
    for (std::size_t b = 0; b < cfg_.depths[s]; ++b) {
      stage.blocks.emplace_back(prefix + ".blocks." + std::to_string(b), cfg_.dim(s), cfg_.heads[s], cfg_.window,
                                b % 2 == 1, cfg_.mlp_ratio, rng);
    }
    const bool local_stage = s + 1 < kNumStages;
    if (local_stage && cfg_.ldc_enabled) {
      stage.ldc.emplace(prefix + ".ldc", cfg_.dim(s), cfg_.ldc_expansion, cfg_.ldc_kernel, rng);
    }
    if (local_stage && cfg_.fr_enabled) {
      stage.fr.emplace(prefix + ".fr", cfg_.dim(s), cfg_.fr_reduction, rng);
    }
    if (local_stage) {
      stage.merge.emplace(prefix + ".merge", cfg_.dim(s), rng);
    }
    stages.push_back(std::move(stage));
  }
  head = ResnetHead<T>("head", cfg_.dim(kNumStages - 1), 2, cfg_.num_labels, cfg_.dropout_rate, rng);
}

template <class T>
Var<T> LdcsfModel<T>::forward(Tape<T>& tape, const Var<T>& images, Rng* dropout_rng, ForwardTrace* trace) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[2] != cfg_.img_size || s[3] != cfg_.img_size) {
    throw ShapeError("model: expected [N," + std::to_string(cfg_.in_channels) + "," + std::to_string(cfg_.img_size) +
                     "," + std::to_string(cfg_.img_size) + "], got " + shape_str(s));
  }
  Var<T> tokens = embed.forward(tape, images);
  for (auto& stage : stages) {
    for (auto& block : stage.blocks) {
      tokens = block.forward(tape, tokens);
    }
    if (stage.ldc || stage.fr) {
      Var<T> fmap = seq_to_img(tokens);
      if (stage.ldc) {
        fmap = stage.ldc->forward(tape, fmap, mode_);
      }
      if (stage.fr) {
        fmap = stage.fr->forward(tape, fmap);
      }
      tokens = img_to_seq(fmap);
    }
    if (trace != nullptr) {
      trace->stage_tokens.push_back(tokens.shape());
    }
    if (stage.merge) {
      tokens = stage.merge->forward(tape, tokens);
    }
  }
  return head.forward(tape, tokens, mode_, dropout_rng);
}

template <class T>
ParameterList<T> LdcsfModel<T>::parameters() {
  ParameterList<T> params;
  embed.collect(params);
  for (auto& stage : stages) {
    for (auto& block : stage.blocks) {
      block.collect(params);
    }
    if (stage.ldc) {
      stage.ldc->collect(params);
    }
    if (stage.fr) {
      stage.fr->collect(params);
    }
    if (stage.merge) {
      stage.merge->collect(params);
    }
  }
  head.collect(params);
  return params;
}

template <class T>
nn::BufferList<T> LdcsfModel<T>::buffers() {
  nn::BufferList<T> buffers;
  for (auto& stage : stages) {
    if (stage.ldc) {
      stage.ldc->collect_buffers(buffers);
    }
  }
  head.collect_buffers(buffers);
  return buffers;
}

// ---------------------------------------------------------------------------
// Loss

template <class T>
LossTerms<T> multilabel_loss(const Var<T>& logits, const Tensor<T>& targets) {
  if (logits.shape().size() != 2 || logits.dim(1) != kNumLabels || targets.shape() != logits.shape()) {
    throw ShapeError("multilabel_loss: expected logits and targets [N,4], got " + shape_str(logits.shape()) + " and " +
                     shape_str(targets.shape()));
  }
  for (const T t : targets.data()) {
    if (t != T(0) && t != T(1)) {
      throw ShapeError("multilabel_loss: target outside {0,1}");
    }
  }
  const std::size_t n = logits.dim(0);
  LossTerms<T> terms;
  for (std::size_t label = 0; label < kNumLabels; ++label) {
    auto index = std::make_shared<std::vector<std::int64_t>>(n);
    Tensor<T> column({n});
    for (std::size_t b = 0; b < n; ++b) {
      (*index)[b] = static_cast<std::int64_t>(b * kNumLabels + label);
      column[b] = targets[b * kNumLabels + label];
    }
    terms.per_label[label] = nn::bce_with_logits(gather(logits, index, {n}), column);
  }
  const auto& parts = terms.per_label;
  terms.total = add(add(add(parts[kInterstitial], parts[kNonTumor]), parts[kTumor]), parts[kNecrosis]);
  auto& v = terms.values;
  v.interstitial = static_cast<double>(parts[kInterstitial].value().item());
  v.non_tumor = static_cast<double>(parts[kNonTumor].value().item());
  v.tumor = static_cast<double>(parts[kTumor].value().item());
  v.necrosis = static_cast<double>(parts[kNecrosis].value().item());
  v.total = MultiLabelLoss::sum_of(v.interstitial, v.non_tumor, v.tumor, v.necrosis);
  return terms;
}

#define LDCSF_INSTANTIATE_MODEL(T)                                          \
  template Var<T> seq_to_img(const Var<T>&);                                \
  template Var<T> img_to_seq(const Var<T>&);                                \
  template class PatchEmbed<T>;                                             \
  template class SwinBlock<T>;                                              \
  template class LdcModule<T>;                                              \
  template class FrModule<T>;                                               \
  template class PatchMerging<T>;                                           \
  template class ResidualUnit<T>;                                           \
  template class ResnetHead<T>;                                             \
  template class LdcsfModel<T>;                                             \
  template LossTerms<T> multilabel_loss(const Var<T>&, const Tensor<T>&);

LDCSF_INSTANTIATE_MODEL(float)
LDCSF_INSTANTIATE_MODEL(double)

}  // namespace ldcsf::model
