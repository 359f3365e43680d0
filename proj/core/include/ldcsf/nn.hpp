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

#ifndef LDCSF_NN_HPP
#define LDCSF_NN_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ldcsf/ops.hpp"
#include "ldcsf/rng.hpp"

namespace ldcsf::nn {

enum class Mode { kTrain, kEval };

/// Named non-trainable state (batch-norm running statistics).
template <class T>
using BufferList = std::vector<std::pair<std::string, Tensor<T>*>>;

// ---------------------------------------------------------------------------
// Functional forms
// ---------------------------------------------------------------------------

// x[..., in] * weight[out, in]^T + bias[out]
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias);

template <class T>
Var<T> relu(const Var<T>& x);
template <class T>
Var<T> sigmoid(const Var<T>& x);
// tanh approximation; at most 4.74e-4 from the erf form (worst near x = -2.70).
template <class T>
Var<T> gelu(const Var<T>& x);
// x * clamp(x + 3, 0, 6) / 6
template <class T>
Var<T> h_swish(const Var<T>& x);

// Normalizes over the trailing dimension (population variance).
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5));

template <class T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  // Number of train-mode batches seen; eval needs at least one.
  Tensor<T> batches_tracked = Tensor<T>::scalar(T(0));
};

// Train mode normalizes with batch statistics and updates `state`
// (running variance uses the unbiased estimate). Eval mode reads `state`.
template <class T>
Var<T> batch_norm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state, Mode mode,
                    T momentum = T(0.1), T eps = T(1e-5));

// Stride 1, zero padding `padding` on every side. weight [out, in, k, k].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias, std::size_t padding);

// One k x k filter per channel, stride 1, "same" zero padding. weight [C,1,k,k], k odd.
template <class T>
Var<T> depthwise_conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias);

// [N,C,H,W] -> [N,C], mean over H*W.
template <class T>
Var<T> global_avg_pool(const Var<T>& x);

// x[N,C,H,W] scaled channel-wise by gate[N,C].
template <class T>
Var<T> mul_channel(const Var<T>& x, const Var<T>& gate);

// Inverted dropout. Eval mode and rate 0 return `x` unchanged.
template <class T>
Var<T> dropout(const Var<T>& x, T rate, Mode mode, Rng& rng);

// Mean over N of binary cross-entropy between sigmoid(logits[N]) and targets[N].
template <class T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets);

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <class T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, bool bias, const Rng& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& x);
  void collect(ParameterList<T>& params);

  std::size_t in_features() const { return weight.value.dim(1); }
  std::size_t out_features() const { return weight.value.dim(0); }

  Parameter<T> weight;
  std::optional<Parameter<T>> bias;
};

template <class T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);

  Var<T> forward(Tape<T>& tape, const Var<T>& x);
  void collect(ParameterList<T>& params);

  Parameter<T> gamma;
  Parameter<T> beta;
};

template <class T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, std::size_t channels);

  Var<T> forward(Tape<T>& tape, const Var<T>& x, Mode mode);
  void collect(ParameterList<T>& params);
  void collect_buffers(BufferList<T>& buffers);

  Parameter<T> gamma;
  Parameter<T> beta;
  BatchNormState<T> state;
  std::string name;
};

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  // Kaiming-normal, fan-out mode.
  Conv2d(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, bool bias, const Rng& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& x);
  void collect(ParameterList<T>& params);

  Parameter<T> weight;
  std::optional<Parameter<T>> bias;
};

template <class T>
class DepthwiseConv2d {
 public:
  DepthwiseConv2d() = default;
  DepthwiseConv2d(const std::string& name, std::size_t channels, std::size_t kernel, bool bias, const Rng& rng);

  Var<T> forward(Tape<T>& tape, const Var<T>& x);
  void collect(ParameterList<T>& params);

  Parameter<T> weight;
  std::optional<Parameter<T>> bias;
};

// Parameter initializers keyed by name so that two models sharing a
// parameter name draw identical values.
template <class T>
Tensor<T> trunc_normal(const Shape& shape, double std, const Rng& rng, const std::string& name);
template <class T>
Tensor<T> kaiming_normal_fan_out(const Shape& shape, std::size_t fan_out, const Rng& rng, const std::string& name);

}  // namespace ldcsf::nn

#endif  // LDCSF_NN_HPP
