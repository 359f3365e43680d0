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

#include <cmath>
#include <memory>

#include "ldcsf/gradcheck.hpp"
#include "ldcsf/ops.hpp"
#include "ldcsf/optim.hpp"
#include "ldcsf/tape.hpp"
#include "test_util.hpp"

namespace ldcsf {
namespace {

using testing::random_tensor;

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor<float>({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_THROW(Tensor<float>({2, 0}), ShapeError);
  Tensor<float> t({2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
  EXPECT_THROW(t.reshaped({4}), ShapeError);
  EXPECT_EQ(Tensor<double>::scalar(2.0).item(), 2.0);
}

TEST(Matmul, IdentityLeavesInputUnchanged) {
  Tape<double> tape;
  auto id = tape.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  auto x = tape.constant(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(matmul(id, x).value(), x.value());
}

TEST(Matmul, HandExample) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 2}, {1, 2, 3, 4}));
  auto b = tape.constant(Tensor<double>({2, 1}, {1, 1}));
  EXPECT_EQ(matmul(a, b).value(), Tensor<double>({2, 1}, {3, 7}));
}

TEST(Matmul, InnerDimensionsMustAgree) {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>({2, 3}));
  auto b = tape.constant(Tensor<double>({2, 3}));
  EXPECT_THROW(matmul(a, b), ShapeError);
}

TEST(Matmul, GradOfSumIsOnesTimesBTransposed) {
  Rng rng(1);
  Tape<double> tape;
  const auto bv = random_tensor<double>({3, 4}, rng);
  auto a = tape.leaf(random_tensor<double>({2, 3}, rng));
  auto b = tape.constant(bv);
  tape.backward(sum(matmul(a, b)));
  const auto g = tape.grad(a);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      double expect = 0.0;
      for (std::size_t j = 0; j < 4; ++j) {
        expect += bv[k * 4 + j];
      }
      EXPECT_NEAR(g[i * 3 + k], expect, 1e-12);
    }
  }
}

TEST(Gemm, MatchesNaiveProductForAllTransposes) {
  Rng rng(2);
  const std::size_t m = 5;
  const std::size_t n = 7;
  const std::size_t k = 3;
  const auto a = random_tensor<double>({m * k}, rng);
  const auto b = random_tensor<double>({k * n}, rng);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      std::vector<double> c(m * n, 0.0);
      detail::gemm(ta, tb, m, n, k, a.data().data(), b.data().data(), c.data(), false);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = ta ? a[p * m + i] : a[i * k + p];
            const double bv = tb ? b[j * k + p] : b[p * n + j];
            s += av * bv;
          }
          ASSERT_NEAR(c[i * n + j], s, 1e-12);
        }
      }
    }
  }
}

TEST(Softmax, UniformOnEqualInputs) {
  Tape<double> tape;
  const auto y = softmax_last_dim(tape.constant(Tensor<double>({3}, {0, 0, 0}))).value();
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(y[i], 1.0 / 3.0, 1e-15);
  }
}

TEST(Softmax, NoOverflowOnLargeInputs) {
  Tape<float> tape;
  const auto y = softmax_last_dim(tape.constant(Tensor<float>({2}, {1000.0f, 0.0f}))).value();
  EXPECT_NEAR(y[0], 1.0f, 1e-6f);
  EXPECT_NEAR(y[1], 0.0f, 1e-6f);
}

TEST(Softmax, LogsOfOneTwoThree) {
  Tape<double> tape;
  const auto y =
      softmax_last_dim(tape.constant(Tensor<double>({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}))).value();
  EXPECT_NEAR(y[0], 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(y[1], 2.0 / 6.0, 1e-15);
  EXPECT_NEAR(y[2], 3.0 / 6.0, 1e-15);
}

TEST(Softmax, RowsSumToOneAndIgnoreConstantShift) {
  Rng rng(3);
  Tape<double> tape;
  const auto x = random_tensor<double>({4, 6}, rng, -5, 5);
  auto shifted = x;
  for (std::size_t r = 0; r < 4; ++r) {
    const double c = rng.uniform(-50, 50);
    for (std::size_t j = 0; j < 6; ++j) {
      shifted[r * 6 + j] += c;
    }
  }
  const auto y = softmax_last_dim(tape.constant(x)).value();
  const auto ys = softmax_last_dim(tape.constant(shifted)).value();
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
      s += y[r * 6 + j];
      EXPECT_NEAR(y[r * 6 + j], ys[r * 6 + j], 1e-12);
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Backward, SumGivesOnes) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({3}, {1, -2, 5}));
  tape.backward(sum(x));
  EXPECT_EQ(tape.grad(x), Tensor<double>({3}, {1, 1, 1}));
}

TEST(Backward, SumOfSquares) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({2}, {1, 2}));
  tape.backward(sum(mul(x, x)));
  EXPECT_EQ(tape.grad(x), Tensor<double>({2}, {2, 4}));
}

TEST(Backward, RejectsNonScalarAndSecondCall) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({2}, {1, 2}));
  EXPECT_THROW(tape.backward(x), ShapeError);
  auto l = sum(x);
  tape.backward(l);
  EXPECT_THROW(tape.backward(l), ShapeError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  // y = x*x + x  -> dy/dx = 2x + 1
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({2}, {3, -1}));
  tape.backward(sum(add(mul(x, x), x)));
  EXPECT_EQ(tape.grad(x), Tensor<double>({2}, {7, -1}));
}

TEST(Backward, ParametersAccumulateAcrossTapes) {
  Parameter<double> p("p", Tensor<double>({2}, {1, 2}));
  p.zero_grad();
  for (int i = 0; i < 2; ++i) {
    Tape<double> tape;
    tape.backward(sum(mul(tape.param(p), tape.param(p))));
  }
  EXPECT_EQ(p.grad, Tensor<double>({2}, {4, 8}));
}

TEST(Tape, NonFiniteValuesAreHardErrors) {
  Tape<double> tape;
  EXPECT_THROW(tape.leaf(Tensor<double>({1}, {NAN})), NumericError);
  auto x = tape.leaf(Tensor<double>({1}, {1e300}));
  EXPECT_THROW(mul(x, x), NumericError);
}

TEST(Tape, SameGraphIsBitReproducible) {
  auto run = [] {
    Rng rng(9);
    Tape<double> tape;
    auto a = tape.leaf(random_tensor<double>({3, 4}, rng));
    auto b = tape.leaf(random_tensor<double>({4, 2}, rng));
    tape.backward(sum(softmax_last_dim(matmul(a, b))));
    return std::make_pair(tape.grad(a), tape.grad(b));
  };
  EXPECT_EQ(run(), run());
}

// Every primitive against central differences in double.
TEST(Ops, GradientsMatchFiniteDifferences) {
  Rng rng(4);
  gradcheck::Options opts;
  Parameter<double> a("a", random_tensor<double>({2, 3, 4}, rng));
  Parameter<double> b("b", random_tensor<double>({2, 4, 5}, rng));
  Parameter<double> bt("bt", random_tensor<double>({2, 5, 4}, rng));
  Parameter<double> c("c", random_tensor<double>({2, 3, 4}, rng));
  Parameter<double> bias("bias", random_tensor<double>({4}, rng));
  Parameter<double> w("w", random_tensor<double>({24}, rng));
  auto perm = std::vector<std::size_t>{2, 0, 1};
  auto idx = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{5, -1, 0, 0, 23, 7});

  const gradcheck::LossFn loss = [&](Tape<double>& t) {
    auto va = t.param(a);
    auto vb = t.param(b);
    auto vc = t.param(c);
    auto x = add_tiled(sub(mul(va, vc), scale(va, 0.5)), t.param(bias));
    auto y = bmm(softmax_last_dim(x), vb);
    auto z = bmm(x, t.param(bt), true);
    auto g = gather(reshape(va, {24}), idx, {6});
    auto p = permute(z, perm);
    auto m = mul(reshape(va, {24}), t.param(w));
    return add(add(mean(mul(y, y)), sum(mul(p, p))), add(sum(mul(g, g)), sum(m)));
  };
  Rng pick(5);
  const auto r = gradcheck::check("ops", {&a, &b, &bt, &c, &bias, &w}, loss, 400, opts, pick);
  EXPECT_TRUE(r.passed) << r.worst << " " << r.max_error;
  EXPECT_GE(r.checked, 120u);
}

TEST(Sgd, PlainStepSubtractsGradient) {
  Parameter<double> p("p", Tensor<double>({2}, {1, 2}));
  Sgd<double> opt({1.0, 0.0, 0.0});
  p.zero_grad();
  p.grad = Tensor<double>({2}, {0.25, -0.5});
  opt.step({&p});
  EXPECT_EQ(p.value, Tensor<double>({2}, {0.75, 2.5}));
}

TEST(Sgd, MomentumDeltas) {
  Parameter<double> p("p", Tensor<double>({1}, {0.0}));
  Sgd<double> opt({0.1, 0.9, 0.0});
  p.zero_grad();
  p.grad[0] = 1.0;
  opt.step({&p});
  EXPECT_NEAR(p.value[0], -0.1, 1e-15);
  opt.step({&p});
  EXPECT_NEAR(p.value[0], -0.1 - 0.19, 1e-15);
}

TEST(Sgd, WeightDecayAloneShrinksParameter) {
  Parameter<double> p("p", Tensor<double>({1}, {3.0}));
  Sgd<double> opt({0.001, 0.0, 1e-4});
  p.zero_grad();
  opt.step({&p});
  EXPECT_NEAR(p.value[0], 3.0 * (1.0 - 1e-7), 1e-15);
}

TEST(Sgd, RejectsBadConfigAndMissingGrad) {
  EXPECT_THROW(Sgd<double>({0.0, 0.9, 0.0}), ConfigError);
  EXPECT_THROW(Sgd<double>({0.1, 1.0, 0.0}), ConfigError);
  EXPECT_THROW(Sgd<double>({0.1, 0.5, -1.0}), ConfigError);
  Parameter<double> p("p", Tensor<double>({1}, {1.0}));
  Sgd<double> opt({0.1, 0.0, 0.0});
  EXPECT_THROW(opt.step({&p}), ShapeError);
}

TEST(Sgd, ConvexQuadraticDecreasesMonotonically) {
  // f(x) = 0.5 * sum(d_i x_i^2)
  Parameter<double> p("p", Tensor<double>({3}, {1.0, -2.0, 0.5}));
  const std::array<double, 3> d{1.0, 4.0, 0.3};
  Sgd<double> opt({0.05, 0.0, 0.0});
  double prev = 1e300;
  for (int step = 0; step < 50; ++step) {
    double f = 0.0;
    p.zero_grad();
    for (std::size_t i = 0; i < 3; ++i) {
      f += 0.5 * d[i] * p.value[i] * p.value[i];
      p.grad[i] = d[i] * p.value[i];
    }
    ASSERT_LT(f, prev);
    prev = f;
    opt.step({&p});
  }
}

}  // namespace
}  // namespace ldcsf
