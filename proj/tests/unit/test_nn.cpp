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

#include "ldcsf/nn.hpp"
#include "ldcsf/ops.hpp"
#include "test_util.hpp"

namespace ldcsf::nn {
namespace {

using testing::random_tensor;

template <class T>
Var<T> c(Tape<T>& tape, Tensor<T> v) {
  return tape.constant(std::move(v));
}

TEST(Linear, IdentityWeight) {
  Tape<double> tape;
  auto x = c(tape, Tensor<double>({2, 2}, {1, 2, 3, 4}));
  auto w = c(tape, Tensor<double>({2, 2}, {1, 0, 0, 1}));
  EXPECT_EQ(linear(x, w, std::optional(c(tape, Tensor<double>({2})))).value(), x.value());
}

TEST(Linear, HandExample) {
  Tape<double> tape;
  auto y = linear(c(tape, Tensor<double>({1, 2}, {2, 3})), c(tape, Tensor<double>({1, 2}, {1, 1})),
                  std::optional(c(tape, Tensor<double>({1}, {1}))));
  EXPECT_EQ(y.value(), Tensor<double>({1, 1}, {6}));
}

TEST(Linear, RejectsWrongWidth) {
  Tape<double> tape;
  EXPECT_THROW(linear(c(tape, Tensor<double>({1, 3})), c(tape, Tensor<double>({1, 2})), std::optional<Var<double>>()), ShapeError);
}

TEST(DepthwiseConv, UnitKernelIsIdentity) {
  Rng rng(1);
  Tape<double> tape;
  const auto x = random_tensor<double>({2, 3, 4, 5}, rng);
  EXPECT_EQ(depthwise_conv2d(c(tape, x), c(tape, Tensor<double>({3, 1, 1, 1}, 1.0)), std::optional<Var<double>>()).value(), x);
}

TEST(DepthwiseConv, OnesKernelCountsNeighbours) {
  Tape<double> tape;
  auto y = depthwise_conv2d(c(tape, Tensor<double>({1, 1, 5, 5}, 1.0)), c(tape, Tensor<double>({1, 1, 3, 3}, 1.0)),
                            std::optional<Var<double>>())
               .value();
  EXPECT_EQ(y[2 * 5 + 2], 9.0);  // interior
  EXPECT_EQ(y[0], 4.0);          // corner
  EXPECT_EQ(y[2], 6.0);          // edge
}

TEST(DepthwiseConv, RejectsEvenKernelAndChannelMismatch) {
  Tape<double> tape;
  auto x = c(tape, Tensor<double>({1, 2, 4, 4}));
  EXPECT_THROW(depthwise_conv2d(x, c(tape, Tensor<double>({2, 1, 2, 2})), std::optional<Var<double>>()), ShapeError);
  EXPECT_THROW(depthwise_conv2d(x, c(tape, Tensor<double>({3, 1, 3, 3})), std::optional<Var<double>>()), ShapeError);
}

TEST(Conv2d, MatchesDirectSum) {
  Rng rng(2);
  Tape<double> tape;
  const std::size_t n = 2, ci = 3, co = 4, h = 5, w = 6, k = 3;
  const auto x = random_tensor<double>({n, ci, h, w}, rng);
  const auto wt = random_tensor<double>({co, ci, k, k}, rng);
  const auto b = random_tensor<double>({co}, rng);
  const auto y = conv2d(c(tape, x), c(tape, wt), std::optional(c(tape, b)), 1).value();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < co; ++o) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          double acc = b[o];
          for (std::size_t q = 0; q < ci; ++q) {
            for (std::size_t di = 0; di < k; ++di) {
              for (std::size_t dj = 0; dj < k; ++dj) {
                const long yy = long(i) + long(di) - 1;
                const long xx = long(j) + long(dj) - 1;
                if (yy < 0 || xx < 0 || yy >= long(h) || xx >= long(w)) {
                  continue;
                }
                acc += x[((s * ci + q) * h + yy) * w + xx] * wt[((o * ci + q) * k + di) * k + dj];
              }
            }
          }
          ASSERT_NEAR(y[((s * co + o) * h + i) * w + j], acc, 1e-12);
        }
      }
    }
  }
}

TEST(HSwish, Values) {
  Tape<double> tape;
  const auto y = h_swish(c(tape, Tensor<double>({6}, {0, 3, 5, -3, -7, 1}))).value();
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 3.0);
  EXPECT_EQ(y[2], 5.0);
  EXPECT_EQ(y[3], 0.0);
  EXPECT_EQ(y[4], 0.0);
  EXPECT_NEAR(y[5], 4.0 / 6.0, 1e-15);
}

// The tanh form peaks at 4.73e-4 from the erf form, at x = -2.699.
TEST(Gelu, CloseToErfForm) {
  Tape<double> tape;
  Tensor<double> x({601});
  for (std::size_t i = 0; i < x.numel(); ++i) {
    x[i] = -6.0 + 0.02 * static_cast<double>(i);
  }
  x[0] = -2.6989;  // worst case
  const auto y = gelu(c(tape, x)).value();
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double exact = 0.5 * x[i] * (1.0 + std::erf(x[i] / std::sqrt(2.0)));
    ASSERT_LE(std::abs(y[i] - exact), 4.74e-4) << x[i];
  }
}

TEST(ReluSigmoid, Values) {
  Tape<double> tape;
  EXPECT_EQ(relu(c(tape, Tensor<double>({3}, {-1, 0, 2}))).value(), Tensor<double>({3}, {0, 0, 2}));
  const auto s = sigmoid(c(tape, Tensor<double>({3}, {0, 40, -40}))).value();
  EXPECT_EQ(s[0], 0.5);
  EXPECT_NEAR(s[1], 1.0, 1e-15);
  EXPECT_NEAR(s[2], 0.0, 1e-15);
}

TEST(LayerNorm, ConstantInputGivesZeros) {
  Tape<double> tape;
  auto y = layer_norm(c(tape, Tensor<double>({2, 4}, 3.0)), c(tape, Tensor<double>({4}, 1.0)),
                      c(tape, Tensor<double>({4})))
               .value();
  for (double v : y.data()) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(LayerNorm, TwoValuesUsePopulationVariance) {
  Tape<double> tape;
  auto y = layer_norm(c(tape, Tensor<double>({2}, {1, 3})), c(tape, Tensor<double>({2}, 1.0)),
                      c(tape, Tensor<double>({2})))
               .value();
  EXPECT_NEAR(y[0], -1.0, 1e-5);
  EXPECT_NEAR(y[1], 1.0, 1e-5);
}

TEST(LayerNorm, SliceStatistics) {
  Rng rng(3);
  Tape<double> tape;
  auto y = layer_norm(c(tape, random_tensor<double>({5, 16}, rng, -4, 9)), c(tape, Tensor<double>({16}, 1.0)),
                      c(tape, Tensor<double>({16})))
               .value();
  for (std::size_t r = 0; r < 5; ++r) {
    double m = 0.0;
    double v = 0.0;
    for (std::size_t j = 0; j < 16; ++j) {
      m += y[r * 16 + j] / 16.0;
    }
    for (std::size_t j = 0; j < 16; ++j) {
      v += (y[r * 16 + j] - m) * (y[r * 16 + j] - m) / 16.0;
    }
    EXPECT_LE(std::abs(m), 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(BatchNorm, ConstantInputTrainModeGivesZeros) {
  Tape<double> tape;
  BatchNormState<double> st{Tensor<double>({2}), Tensor<double>({2}, 1.0)};
  auto y = batch_norm2d(c(tape, Tensor<double>({2, 2, 3, 3}, 5.0)), c(tape, Tensor<double>({2}, 1.0)),
                        c(tape, Tensor<double>({2})), st, Mode::kTrain)
               .value();
  for (double v : y.data()) {
    EXPECT_EQ(v, 0.0);
  }
  // running mean moved 10% toward the batch mean
  EXPECT_NEAR(st.running_mean[0], 0.5, 1e-12);
}

TEST(BatchNorm, EvalWithUnitStatsIsIdentity) {
  Rng rng(4);
  Tape<double> tape;
  BatchNormState<double> st{Tensor<double>({3}), Tensor<double>({3}, 1.0), Tensor<double>::scalar(1.0)};
  const auto x = random_tensor<double>({2, 3, 2, 2}, rng);
  auto y = batch_norm2d(c(tape, x), c(tape, Tensor<double>({3}, 1.0)), c(tape, Tensor<double>({3})), st, Mode::kEval)
               .value();
  EXPECT_LE(testing::max_abs_diff(x, y), 1e-5);
}

TEST(BatchNorm, EvalBeforeTrainIsAnError) {
  BatchNorm2d<double> bn("bn", 2);
  Tape<double> tape;
  EXPECT_THROW(bn.forward(tape, c(tape, Tensor<double>({1, 2, 2, 2})), Mode::kEval), ConfigError);
}

TEST(BatchNorm, TrainOutputStatistics) {
  Rng rng(5);
  Tape<double> tape;
  BatchNormState<double> st{Tensor<double>({3}), Tensor<double>({3}, 1.0)};
  auto y = batch_norm2d(c(tape, random_tensor<double>({4, 3, 3, 3}, rng, -2, 7)), c(tape, Tensor<double>({3}, 1.0)),
                        c(tape, Tensor<double>({3})), st, Mode::kTrain)
               .value();
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double m = 0.0;
    double v = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < 9; ++i) {
        m += y[(n * 3 + ch) * 9 + i] / 36.0;
      }
    }
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t i = 0; i < 9; ++i) {
        const double d = y[(n * 3 + ch) * 9 + i] - m;
        v += d * d / 36.0;
      }
    }
    EXPECT_LE(std::abs(m), 1e-5);
    EXPECT_NEAR(v, 1.0, 1e-3);
    EXPECT_GE(st.running_var[ch], 0.0);
  }
}

TEST(GlobalAvgPool, ValuesAndGradient) {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({1, 2, 2, 2}, {1, 2, 3, 4, 7, 7, 7, 7}));
  auto y = global_avg_pool(x);
  EXPECT_EQ(y.value(), Tensor<double>({1, 2}, {2.5, 7}));
  tape.backward(sum(y));
  const auto g = tape.grad(x);
  for (double v : g.data()) {
    EXPECT_EQ(v, 0.25);
  }
}

TEST(Dropout, IdentityWhenRateZeroOrEval) {
  Rng rng(6);
  Tape<double> tape;
  const auto x = random_tensor<double>({100}, rng);
  Rng d(1);
  EXPECT_EQ(dropout(c(tape, x), 0.0, Mode::kTrain, d).value(), x);
  EXPECT_EQ(dropout(c(tape, x), 0.5, Mode::kEval, d).value(), x);
  EXPECT_THROW(dropout(c(tape, x), 1.0, Mode::kTrain, d), ConfigError);
}

TEST(Dropout, PreservesExpectedValue) {
  Tape<double> tape;
  Rng d(7);
  const auto y = dropout(c(tape, Tensor<double>({100000}, 2.0)), 0.1, Mode::kTrain, d).value();
  double s = 0.0;
  std::size_t zeros = 0;
  for (double v : y.data()) {
    s += v;
    zeros += v == 0.0;
  }
  EXPECT_NEAR(s / 100000.0, 2.0, 0.02);
  EXPECT_NEAR(static_cast<double>(zeros) / 100000.0, 0.1, 0.005);
}

TEST(MulChannel, ScalesEachChannel) {
  Tape<double> tape;
  auto y = mul_channel(c(tape, Tensor<double>({1, 2, 1, 2}, {2, 4, -6, 8})), c(tape, Tensor<double>({1, 2}, {0.5, 1})))
               .value();
  EXPECT_EQ(y, Tensor<double>({1, 2, 1, 2}, {1, 2, -6, 8}));
}

TEST(BceWithLogits, MatchesDefinition) {
  Tape<double> tape;
  auto l = bce_with_logits(c(tape, Tensor<double>({3}, {0.0, 2.0, -30.0})), Tensor<double>({3}, {1, 0, 0})).value();
  const double expect = (std::log(2.0) + std::log1p(std::exp(2.0)) + std::log1p(std::exp(-30.0))) / 3.0;
  EXPECT_NEAR(l.item(), expect, 1e-15);
  EXPECT_THROW(bce_with_logits(c(tape, Tensor<double>({1})), Tensor<double>({1}, {0.5})), ShapeError);
}

TEST(Init, KeyedByNameNotByOrder) {
  const Rng rng(8);
  const auto a = trunc_normal<float>({4, 4}, 0.02, rng, "layer.weight");
  const auto b = trunc_normal<float>({4, 4}, 0.02, rng, "layer.weight");
  const auto other = trunc_normal<float>({4, 4}, 0.02, rng, "other.weight");
  EXPECT_EQ(a, b);
  EXPECT_NE(a, other);
  for (float v : a.data()) {
    EXPECT_LE(std::abs(v), 0.04f);
  }
}

}  // namespace
}  // namespace ldcsf::nn
