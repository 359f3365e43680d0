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

#ifndef LDCSF_EVAL_HPP
#define LDCSF_EVAL_HPP

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldcsf/labels.hpp"

namespace ldcsf::eval {

using Scores = std::array<double, kNumLabels>;

// Per-label `score >= threshold`. Throws DataError for scores outside [0,1].
std::vector<LabelVector> binarize(std::span<const Scores> scores, double threshold = 0.5);

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

struct LabelMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

struct ClassificationMetrics {
  std::array<LabelMetrics, kNumLabels> labels;
  std::array<Counts, kNumLabels> confusion;
  double subset_accuracy = 0.0;  // all four bits right
  // truth combination mask -> predicted combination mask -> count
  std::map<unsigned, std::map<unsigned, std::size_t>> combinations;
  std::vector<std::string> warnings;  // zero denominators (metric reported as 0)
};

ClassificationMetrics per_label_metrics(std::span<const LabelVector> predicted, std::span<const LabelVector> truth);

struct RocCurve {
  std::vector<double> fpr;
  std::vector<double> tpr;
  double auc = 0.0;
};

// One point per distinct score (ties form a single step), starting at (0,0).
// Throws DataError when truth has no positives or no negatives.
RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> truth);
double trapezoid_auc(const RocCurve& curve);

struct RocSet {
  std::array<std::optional<RocCurve>, kNumLabels> labels;  // empty when undefined
  RocCurve micro;
  RocCurve macro;
  std::vector<std::string> warnings;
};

// micro: pooled (score, bit) pairs. macro: mean TPR over the defined labels on
// the union of their FPR vertices; at a vertical segment both the entry and
// exit TPR are kept, so the macro AUC is the mean of per-label AUCs.
RocSet micro_macro_roc(std::span<const Scores> scores, std::span<const LabelVector> truth);

// stroma / (stroma + tumor) tile counts, or the inverse form. Throws DataError
// when both counts are zero.
double tumor_stroma_ratio(std::span<const LabelVector> predicted, bool inverse = false);

struct EvalReport {
  double threshold = 0.5;
  std::size_t num_samples = 0;
  ClassificationMetrics metrics;
  RocSet roc;
  std::optional<double> tumor_stroma_ratio;
};

EvalReport evaluate(std::span<const Scores> scores, std::span<const LabelVector> truth, double threshold = 0.5);

inline constexpr std::size_t kAverageGridPoints = 1001;

struct AggregateReport {
  std::size_t rounds = 0;
  EvalReport mean;  // scalar means; curves vertically averaged on a 1001-point FPR grid
  std::array<LabelMetrics, kNumLabels> std;  // population standard deviation
  double subset_accuracy_std = 0.0;
  std::array<double, kNumLabels> auc_std{};
  double micro_auc_std = 0.0;
  double macro_auc_std = 0.0;
};

AggregateReport aggregate_rounds(std::span<const EvalReport> reports);

// Vertical average: TPR at each grid FPR (upper value on vertical segments),
// averaged over curves.
RocCurve vertical_average(std::span<const RocCurve> curves, std::size_t grid_points = kAverageGridPoints);

nlohmann::ordered_json to_json(const EvalReport& report);
nlohmann::ordered_json to_json(const AggregateReport& report);

// "fpr,tpr" rows.
std::string roc_csv(const RocCurve& curve);
// Self-contained plot: four labels, micro, macro, chance diagonal.
std::string roc_svg(const RocSet& roc, const std::string& title = "ROC");

}  // namespace ldcsf::eval

#endif  // LDCSF_EVAL_HPP
