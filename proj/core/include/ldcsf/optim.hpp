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

#ifndef LDCSF_OPTIM_HPP
#define LDCSF_OPTIM_HPP

#include <vector>

#include "ldcsf/tape.hpp"

namespace ldcsf {

struct SgdConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  // Throws ConfigError unless lr > 0, 0 <= momentum < 1, weight_decay >= 0.
  void validate() const;
};

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
///   v <- momentum * v + (grad + weight_decay * param)
///   param <- param - lr * v
template <class T>
class Sgd {
 public:
  explicit Sgd(SgdConfig cfg);

  // Applies one update to every parameter, in order. The parameter list must
  // be the same (same order, same shapes) on every call.
  void step(const ParameterList<T>& params);
  static void zero_grad(const ParameterList<T>& params);

  const SgdConfig& config() const { return cfg_; }
  // One buffer per parameter, empty until the first step.
  std::vector<Tensor<T>>& velocities() { return velocities_; }
  const std::vector<Tensor<T>>& velocities() const { return velocities_; }

 private:
  SgdConfig cfg_;
  std::vector<Tensor<T>> velocities_;
};

}  // namespace ldcsf

#endif  // LDCSF_OPTIM_HPP
