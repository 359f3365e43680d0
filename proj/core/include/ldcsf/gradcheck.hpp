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

#ifndef LDCSF_GRADCHECK_HPP
#define LDCSF_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "ldcsf/rng.hpp"
#include "ldcsf/tape.hpp"

// Central finite-difference checks of reverse-mode gradients, in double.
namespace ldcsf::gradcheck {

struct Options {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error, so that gradients which are
  // zero up to rounding do not blow the ratio up.
  double floor = 1e-3;
  std::size_t samples = 48;         // per layer check
  std::size_t model_samples = 256;  // end-to-end toy model
  std::uint64_t seed = 0;
  bool include_model = true;  // run_suite: add the end-to-end toy model check
};

struct Result {
  std::string name;
  std::size_t checked = 0;
  double max_error = 0.0;
  std::string worst;  // "param[index]" with the largest error
  bool passed = false;
  double seconds = 0.0;
};

// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

using LossFn = std::function<Var<double>(Tape<double>&)>;

// Compares backward() against central differences on up to `samples`
// entries drawn uniformly from `params` (all entries if fewer). `loss` must
// be deterministic: it is re-run for every perturbation.
Result check(const std::string& name, const ParameterList<double>& params, const LossFn& loss, std::size_t samples,
             const Options& opts, Rng& rng);

// Every differentiable layer, block and the toy model end to end.
std::vector<Result> run_suite(const Options& opts);

}  // namespace ldcsf::gradcheck

#endif  // LDCSF_GRADCHECK_HPP
