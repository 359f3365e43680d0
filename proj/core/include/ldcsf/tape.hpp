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

#ifndef LDCSF_TAPE_HPP
#define LDCSF_TAPE_HPP

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ldcsf/tensor.hpp"

namespace ldcsf {

/// A trainable tensor owned by a layer. `grad` has the value's shape once
/// zero_grad() has run; the tape accumulates into it on backward().
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool has_grad = false;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() {
    grad = Tensor<T>(value.shape());
    has_grad = true;
  }
};

/// Non-owning ordered view of a model's parameters.
template <class T>
using ParameterList = std::vector<Parameter<T>*>;

template <class T>
class Tape;

/// Handle to a node recorded on a tape.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t i) const { return value().dim(i); }
  std::size_t numel() const { return value().numel(); }
  bool requires_grad() const;

  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Arguments handed to a backward rule: forward values plus gradient slots.
/// grad_inputs[i] is null when input i does not require a gradient.
template <class T>
struct BackwardArgs {
  const Tensor<T>& output;
  const Tensor<T>& grad_output;
  std::vector<const Tensor<T>*> inputs;
  std::vector<Tensor<T>*> grad_inputs;
};

/// Records operations in execution order and replays their backward rules in
/// reverse. One tape serves one forward/backward pass.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(const BackwardArgs<T>&)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value, bool requires_grad = true);
  // Repeated calls with the same parameter return the same node.
  Var<T> param(Parameter<T>& p);

  // Appends an operation. Throws NumericError if `output` is not finite.
  Var<T> record(Tensor<T> output, std::vector<Var<T>> inputs, BackwardFn backward, const char* op_name);

  // Populates gradients of every requires_grad node with d(loss)/d(node) and
  // accumulates them into the parameters met through param().
  void backward(const Var<T>& loss);

  const Tensor<T>& value(std::size_t id) const {
    const Node& node = nodes_.at(id);
    return node.param != nullptr ? node.param->value : node.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  // Gradient of a node after backward(); zeros if the node was unreachable.
  Tensor<T> grad(const Var<T>& v) const;

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_ops() const { return ops_.size(); }

 private:
  // Parameter nodes read param->value directly instead of holding a copy.
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
  };
  struct Op {
    std::vector<std::size_t> inputs;
    std::size_t output;
    BackwardFn backward;
    const char* name;
  };

  Tensor<T>& grad_slot(std::size_t id);

  bool recording_;
  bool backward_done_ = false;
  // deque keeps references to earlier values stable while recording.
  std::deque<Node> nodes_;
  std::vector<Op> ops_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <class T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

}  // namespace ldcsf

#endif  // LDCSF_TAPE_HPP
