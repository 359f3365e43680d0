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

#include "ldcsf/optim.hpp"

namespace ldcsf {

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw ConfigError("sgd: learning_rate must be > 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("sgd: momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) {
    throw ConfigError("sgd: weight_decay must be >= 0");
  }
}

template <class T>
Sgd<T>::Sgd(SgdConfig cfg) : cfg_(cfg) {
  cfg_.validate();
}

template <class T>
void Sgd<T>::step(const ParameterList<T>& params) {
  if (velocities_.empty()) {
    velocities_.reserve(params.size());
    for (const auto* p : params) {
      velocities_.emplace_back(p->value.shape());
    }
  }
  if (velocities_.size() != params.size()) {
    throw ShapeError("sgd: parameter list changed between steps");
  }
  const T lr = static_cast<T>(cfg_.learning_rate);
  const T momentum = static_cast<T>(cfg_.momentum);
  const T decay = static_cast<T>(cfg_.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    if (!p.has_grad) {
      throw ShapeError("sgd: parameter " + p.name + " has no gradient");
    }
    Tensor<T>& v = velocities_[i];
    if (v.shape() != p.value.shape()) {
      throw ShapeError("sgd: velocity shape mismatch for " + p.name);
    }
    auto pv = p.value.data();
    const auto gv = p.grad.data();
    auto vv = v.data();
    for (std::size_t j = 0; j < pv.size(); ++j) {
      vv[j] = momentum * vv[j] + (gv[j] + decay * pv[j]);
      pv[j] -= lr * vv[j];
    }
  }
}

template <class T>
void Sgd<T>::zero_grad(const ParameterList<T>& params) {
  for (auto* p : params) {
    p->zero_grad();
  }
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace ldcsf
