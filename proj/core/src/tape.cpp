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

#include "ldcsf/tape.hpp"

namespace ldcsf {

template <class T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, nullptr});
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value in tape leaf");
  }
  nodes_.push_back(Node{std::move(value), {}, false, requires_grad && recording_, nullptr});
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  if (const auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var<T>(this, it->second);
  }
  if (!p.value.all_finite()) {
    throw NumericError("non-finite value in parameter " + p.name);
  }
  // Optimizer updates must not happen while a tape holding `p` is alive.
  nodes_.push_back(Node{Tensor<T>(), {}, false, recording_, &p});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Tape<T>::record(Tensor<T> output, std::vector<Var<T>> inputs, BackwardFn backward, const char* op_name) {
  if (!output.all_finite()) {
    throw NumericError(std::string("non-finite output from ") + op_name);
  }
  bool needs_grad = false;
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.tape() != this) {
      throw ShapeError(std::string(op_name) + ": input belongs to a different tape");
    }
    ids.push_back(in.id());
    needs_grad = needs_grad || nodes_[in.id()].requires_grad;
  }
  needs_grad = needs_grad && recording_;
  nodes_.push_back(Node{std::move(output), {}, false, needs_grad, nullptr});
  const std::size_t out_id = nodes_.size() - 1;
  if (needs_grad) {
    ops_.push_back(Op{std::move(ids), out_id, std::move(backward), op_name});
  }
  return Var<T>(this, out_id);
}

template <class T>
Tensor<T>& Tape<T>::grad_slot(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Tensor<T>(value(id).shape());
    node.has_grad = true;
  }
  return node.grad;
}

template <class T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss.tape() != this) {
    throw ShapeError("backward: loss belongs to a different tape");
  }
  if (backward_done_) {
    throw ShapeError("backward called twice on the same tape");
  }
  if (loss.numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!recording_) {
    throw ShapeError("backward on a tape that was not recording");
  }
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) {
    return;
  }
  grad_slot(loss.id()).storage().assign(1, T(1));

  // Ops were appended in execution order, so reverse order is a valid
  // topological order and each op runs exactly once.
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    const Node& out = nodes_[it->output];
    if (!out.has_grad) {
      continue;
    }
    std::vector<const Tensor<T>*> inputs;
    std::vector<Tensor<T>*> grads;
    inputs.reserve(it->inputs.size());
    grads.reserve(it->inputs.size());
    for (const auto id : it->inputs) {
      inputs.push_back(&value(id));
      grads.push_back(nodes_[id].requires_grad ? &grad_slot(id) : nullptr);
    }
    it->backward(BackwardArgs<T>{out.value, out.grad, std::move(inputs), std::move(grads)});
    for (const auto id : it->inputs) {
      if (nodes_[id].requires_grad && !nodes_[id].grad.all_finite()) {
        throw NumericError(std::string("non-finite gradient from ") + it->name);
      }
    }
  }

  for (auto& node : nodes_) {
    if (node.param != nullptr && node.has_grad) {
      Parameter<T>& p = *node.param;
      if (!p.has_grad) {
        p.zero_grad();
      }
      auto dst = p.grad.data();
      const auto src = node.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
      }
    }
  }
}

template <class T>
Tensor<T> Tape<T>::grad(const Var<T>& v) const {
  const Node& node = nodes_.at(v.id());
  return node.has_grad ? node.grad : Tensor<T>(value(v.id()).shape());
}

template class Tape<float>;
template class Tape<double>;

}  // namespace ldcsf
