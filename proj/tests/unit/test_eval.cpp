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

#include <algorithm>
#include <cmath>

#include "ldcsf/errors.hpp"
#include "ldcsf/eval.hpp"
#include "ldcsf/rng.hpp"

namespace ldcsf::eval {
namespace {

LabelVector lv(unsigned mask) { return LabelVector::from_mask(mask); }

// (#ordered pairs + ties/2) / (n_pos * n_neg)
double mann_whitney(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double good = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
  }
  return good / pairs;
}

// Predictions/truth for one label from (tp, fp, fn, tn) counts; other labels stay 0.
void fill(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn, std::vector<LabelVector>& pred,
          std::vector<LabelVector>& truth) {
  auto push = [&](std::size_t n, bool p, bool t) {
    for (std::size_t i = 0; i < n; ++i) {
      pred.push_back(lv(p ? 1u : 0u));
      truth.push_back(lv(t ? 1u : 0u));
    }
  };
  push(tp, true, true);
  push(fp, true, false);
  push(fn, false, true);
  push(tn, false, false);
}

TEST(Binarize, Conventions) {
  const std::vector<Scores> s = {{0.5, 0.49, 0.0, 1.0}, {0, 0, 0, 0}};
  const auto b = binarize(s);
  EXPECT_EQ(b[0].bits, (std::array<std::uint8_t, 4>{1, 0, 0, 1}));
  EXPECT_FALSE(b[1].any());
  EXPECT_EQ(binarize(s, 0.0)[1].mask(), 15u);
  const std::vector<Scores> bad = {{1.1, 0, 0, 0}};
  EXPECT_THROW(binarize(bad), DataError);
  const std::vector<Scores> nan = {{std::nan(""), 0, 0, 0}};
  EXPECT_THROW(binarize(nan), DataError);
}

TEST(Metrics, Perfect) {
  const std::vector<LabelVector> t = {lv(1), lv(6), lv(9), lv(15), lv(2)};
  const auto m = per_label_metrics(t, t);
  for (const auto& l : m.labels) {
    EXPECT_EQ(l.precision, 1.0);
    EXPECT_EQ(l.recall, 1.0);
    EXPECT_EQ(l.f1, 1.0);
    EXPECT_EQ(l.accuracy, 1.0);
  }
  EXPECT_EQ(m.subset_accuracy, 1.0);
}

TEST(Metrics, HandCountEights) {
  std::vector<LabelVector> p;
  std::vector<LabelVector> t;
  fill(8, 2, 2, 8, p, t);
  const auto m = per_label_metrics(p, t);
  const auto& l = m.labels[0];
  EXPECT_DOUBLE_EQ(l.precision, 0.8);
  EXPECT_DOUBLE_EQ(l.recall, 0.8);
  EXPECT_DOUBLE_EQ(l.f1, 0.8);
  EXPECT_DOUBLE_EQ(l.accuracy, 0.8);
  EXPECT_EQ(m.confusion[0].tp, 8u);
  EXPECT_EQ(m.confusion[0].tn, 8u);
}

TEST(Metrics, HandCountTwoThirds) {
  std::vector<LabelVector> p;
  std::vector<LabelVector> t;
  fill(2, 1, 1, 6, p, t);
  const auto m = per_label_metrics(p, t);
  const auto& l = m.labels[0];
  EXPECT_DOUBLE_EQ(l.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(l.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(l.f1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(l.accuracy, 0.8);
}

TEST(Metrics, ZeroDenominatorWarns) {
  const std::vector<LabelVector> t = {lv(1), lv(1)};
  const auto m = per_label_metrics(t, t);
  EXPECT_EQ(m.labels[kTumor].precision, 0.0);
  EXPECT_EQ(m.labels[kTumor].accuracy, 1.0);
  EXPECT_FALSE(m.warnings.empty());
}

TEST(Metrics, Errors) {
  const std::vector<LabelVector> a = {lv(1)};
  const std::vector<LabelVector> b = {lv(1), lv(2)};
  EXPECT_THROW(per_label_metrics(a, b), ShapeError);
  EXPECT_THROW(per_label_metrics(std::span<const LabelVector>(), std::span<const LabelVector>()), DataError);
}

TEST(Metrics, RandomProperties) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<LabelVector> p;
    std::vector<LabelVector> t;
    for (std::size_t i = 0; i < n; ++i) {
      p.push_back(lv(static_cast<unsigned>(rng.below(16))));
      t.push_back(lv(static_cast<unsigned>(rng.below(16))));
    }
    const auto m = per_label_metrics(p, t);
    std::size_t combos = 0;
    for (const auto& [truth, row] : m.combinations) {
      for (const auto& [pred, count] : row) {
        combos += count;
      }
    }
    EXPECT_EQ(combos, n);
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      EXPECT_EQ(m.confusion[l].total(), n);
      const auto& x = m.labels[l];
      for (const double v : {x.precision, x.recall, x.f1, x.accuracy}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
      if (x.precision > 0 && x.recall > 0) {
        EXPECT_NEAR(1.0 / x.f1, (1.0 / x.precision + 1.0 / x.recall) / 2.0, 1e-12);
      }
    }
  }
}

TEST(Roc, Examples) {
  const std::vector<double> s = {0.9, 0.4, 0.5, 0.1};
  const std::vector<std::uint8_t> y = {1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(roc_curve(s, y).auc, 0.75);
  const std::vector<double> sep = {0.9, 0.8, 0.2, 0.1};
  EXPECT_EQ(roc_curve(sep, y).auc, 1.0);
  const std::vector<double> inv = {0.1, 0.2, 0.8, 0.9};
  EXPECT_EQ(roc_curve(inv, y).auc, 0.0);
}

TEST(Roc, ShapeAndTies) {
  const std::vector<double> s = {0.7, 0.7, 0.7, 0.2};
  const std::vector<std::uint8_t> y = {1, 0, 1, 0};
  const auto c = roc_curve(s, y);
  EXPECT_EQ(c.fpr.front(), 0.0);
  EXPECT_EQ(c.tpr.front(), 0.0);
  EXPECT_EQ(c.fpr.back(), 1.0);
  EXPECT_EQ(c.tpr.back(), 1.0);
  ASSERT_EQ(c.fpr.size(), 3u);  // origin, tied group, last score
  EXPECT_DOUBLE_EQ(c.auc, mann_whitney(s, y));
  EXPECT_DOUBLE_EQ(trapezoid_auc(c), c.auc);
}

TEST(Roc, UndefinedForSingleClass) {
  const std::vector<double> s = {0.1, 0.2};
  const std::vector<std::uint8_t> y = {1, 1};
  EXPECT_THROW(roc_curve(s, y), DataError);
  const std::vector<std::uint8_t> short_y = {1};
  EXPECT_THROW(roc_curve(s, short_y), ShapeError);
}

TEST(Roc, MannWhitneyEquivalence) {
  Rng rng(2);
  for (const std::size_t n : {10u, 100u}) {
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> s(n);
      std::vector<std::uint8_t> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        // Coarse grid so ties are common.
        s[i] = static_cast<double>(rng.below(trial % 2 == 0 ? 7 : 1000)) / 1000.0;
        y[i] = static_cast<std::uint8_t>(rng.below(2));
      }
      y[0] = 1;
      y[1] = 0;
      const auto c = roc_curve(s, y);
      EXPECT_NEAR(c.auc, mann_whitney(s, y), 1e-9);
      EXPECT_TRUE(std::is_sorted(c.fpr.begin(), c.fpr.end()));
      EXPECT_TRUE(std::is_sorted(c.tpr.begin(), c.tpr.end()));
    }
  }
}

TEST(Roc, MonotoneTransformInvariance) {
  Rng rng(3);
  std::vector<double> s(50);
  std::vector<std::uint8_t> y(50);
  for (std::size_t i = 0; i < 50; ++i) {
    s[i] = static_cast<double>(rng.below(20)) / 20.0;
    y[i] = static_cast<std::uint8_t>(i % 3 == 0);
  }
  std::vector<double> t(50);
  std::transform(s.begin(), s.end(), t.begin(), [](double v) { return 1.0 / (1.0 + std::exp(-5.0 * v + 1.0)); });
  const auto a = roc_curve(s, y);
  const auto b = roc_curve(t, y);
  EXPECT_EQ(a.fpr, b.fpr);
  EXPECT_EQ(a.tpr, b.tpr);
  EXPECT_EQ(a.auc, b.auc);
}

TEST(MicroMacro, IdenticalLabelsCollapse) {
  const std::vector<double> raw = {0.9, 0.3, 0.6, 0.2, 0.8};
  const std::vector<std::uint8_t> y = {1, 0, 1, 0, 0};
  std::vector<Scores> scores;
  std::vector<LabelVector> truth;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    scores.push_back({raw[i], raw[i], raw[i], raw[i]});
    truth.push_back(lv(y[i] ? 15u : 0u));
  }
  const auto set = micro_macro_roc(scores, truth);
  const auto single = roc_curve(raw, y);
  EXPECT_DOUBLE_EQ(set.micro.auc, single.auc);
  EXPECT_DOUBLE_EQ(set.macro.auc, single.auc);
  EXPECT_EQ(set.micro.fpr, single.fpr);
  EXPECT_EQ(set.micro.tpr, single.tpr);
}

TEST(MicroMacro, MacroAucIsMeanOfLabels) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Scores> scores(30);
    std::vector<LabelVector> truth(30);
    for (std::size_t i = 0; i < 30; ++i) {
      for (auto& v : scores[i]) {
        v = rng.uniform();
      }
      truth[i] = lv(static_cast<unsigned>(rng.below(16)));
    }
    truth[0] = lv(15);
    truth[1] = lv(0);
    const auto set = micro_macro_roc(scores, truth);
    double mean = 0.0;
    for (const auto& c : set.labels) {
      ASSERT_TRUE(c.has_value());
      mean += c->auc / 4.0;
    }
    EXPECT_NEAR(set.macro.auc, mean, 1e-12);

    std::vector<double> pooled;
    std::vector<std::uint8_t> bits;
    for (std::size_t i = 0; i < 30; ++i) {
      for (std::size_t l = 0; l < kNumLabels; ++l) {
        pooled.push_back(scores[i][l]);
        bits.push_back(truth[i].bits[l]);
      }
    }
    EXPECT_NEAR(set.micro.auc, mann_whitney(pooled, bits), 1e-9);
  }
}

TEST(MicroMacro, UndefinedLabelExcluded) {
  const std::vector<Scores> scores = {{0.9, 0.1, 0.2, 0.8}, {0.2, 0.3, 0.7, 0.1}};
  const std::vector<LabelVector> truth = {lv(1 | 8), lv(4)};  // necrosis never positive
  const auto set = micro_macro_roc(scores, truth);
  EXPECT_FALSE(set.labels[kNecrosis].has_value());
  EXPECT_FALSE(set.warnings.empty());
  EXPECT_DOUBLE_EQ(set.macro.auc, 1.0);
}

TEST(Tsr, Examples) {
  std::vector<LabelVector> p(100, lv(1u << kInterstitial));
  p.insert(p.end(), 300, lv(1u << kTumor));
  EXPECT_DOUBLE_EQ(tumor_stroma_ratio(p), 0.25);
  EXPECT_DOUBLE_EQ(tumor_stroma_ratio(p, true), 0.75);
  const std::vector<LabelVector> stroma = {lv(1), lv(1 | 4)};
  EXPECT_EQ(tumor_stroma_ratio(stroma), 1.0);
  const std::vector<LabelVector> dual(7, lv(1 | 8));
  EXPECT_EQ(tumor_stroma_ratio(dual), 0.5);
  const std::vector<LabelVector> neither = {lv(2), lv(4)};
  EXPECT_THROW(tumor_stroma_ratio(neither), DataError);
}

TEST(Tsr, OrderInvariant) {
  Rng rng(5);
  std::vector<LabelVector> p;
  for (int i = 0; i < 200; ++i) {
    p.push_back(lv(static_cast<unsigned>(rng.below(16))));
  }
  const double base = tumor_stroma_ratio(p);
  for (int k = 0; k < 5; ++k) {
    rng.shuffle(std::span<LabelVector>(p));
    EXPECT_EQ(tumor_stroma_ratio(p), base);
  }
}

// Ten samples covering both classes for every label; `wrong` interstitial
// predictions flipped to negative.
EvalReport report_with_errors(std::size_t wrong) {
  std::vector<Scores> scores;
  std::vector<LabelVector> truth;
  for (std::size_t i = 0; i < 10; ++i) {
    const unsigned mask = i % 2 == 0 ? 15u : 0u;
    truth.push_back(lv(mask));
    Scores s{};
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      s[l] = (mask >> l & 1u) ? 0.9 : 0.1;
    }
    if (i < 2 * wrong && mask != 0) {
      s[kInterstitial] = 0.05;
    }
    scores.push_back(s);
  }
  return evaluate(scores, truth);
}

TEST(Aggregate, MeanAndPopulationStd) {
  const std::vector<EvalReport> reports = {report_with_errors(1), report_with_errors(0)};
  EXPECT_DOUBLE_EQ(reports[0].metrics.labels[kInterstitial].accuracy, 0.9);
  const auto agg = aggregate_rounds(reports);
  EXPECT_EQ(agg.rounds, 2u);
  EXPECT_NEAR(agg.mean.metrics.labels[kInterstitial].accuracy, 0.95, 1e-15);
  EXPECT_NEAR(agg.std[kInterstitial].accuracy, 0.05, 1e-15);
  EXPECT_EQ(agg.std[kTumor].accuracy, 0.0);
  EXPECT_EQ(agg.mean.roc.micro.fpr.size(), kAverageGridPoints + 1);  // grid plus the origin anchor
}

TEST(Aggregate, SingleReportIsItself) {
  const std::vector<EvalReport> one = {report_with_errors(1)};
  const auto agg = aggregate_rounds(one);
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    EXPECT_EQ(agg.mean.metrics.labels[l].f1, one[0].metrics.labels[l].f1);
    EXPECT_EQ(agg.std[l].f1, 0.0);
    EXPECT_EQ(agg.auc_std[l], 0.0);
  }
  EXPECT_THROW(aggregate_rounds(std::span<const EvalReport>()), DataError);
}

TEST(Aggregate, LabelSetMismatch) {
  const std::vector<Scores> scores = {{0.9, 0.1, 0.2, 0.8}, {0.2, 0.3, 0.7, 0.1}};
  const std::vector<LabelVector> truth = {lv(1 | 8), lv(4)};
  const std::vector<EvalReport> reports = {report_with_errors(0), evaluate(scores, truth)};
  EXPECT_THROW(aggregate_rounds(reports), DataError);
}

TEST(VerticalAverage, IdenticalCurves) {
  const std::vector<double> s = {0.9, 0.4, 0.5, 0.1};
  const std::vector<std::uint8_t> y = {1, 1, 0, 0};
  const auto c = roc_curve(s, y);
  const std::vector<RocCurve> two = {c, c};
  const auto avg = vertical_average(two);
  EXPECT_NEAR(avg.auc, c.auc, 1e-3);
  EXPECT_EQ(avg.fpr.front(), 0.0);
  EXPECT_EQ(avg.fpr.back(), 1.0);
  EXPECT_EQ(avg.tpr.back(), 1.0);
}

TEST(Output, JsonCsvSvg) {
  const auto r = report_with_errors(1);
  const auto j = to_json(r);
  EXPECT_EQ(j.at("num_samples"), 10);
  const std::string csv = roc_csv(r.roc.micro);
  EXPECT_EQ(csv.rfind("fpr,tpr\n", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), r.roc.micro.fpr.size() + 1);
  const std::string svg = roc_svg(r.roc, "t");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(std::count(svg.begin(), svg.end(), '\n') > 0, true);
  for (const char* name : {"micro", "macro", "tumor", "necrosis"}) {
    EXPECT_NE(svg.find(name), std::string::npos) << name;
  }
}

}  // namespace
}  // namespace ldcsf::eval
