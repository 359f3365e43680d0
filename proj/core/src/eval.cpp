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

#include "ldcsf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ldcsf/errors.hpp"

namespace ldcsf::eval {
namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// TPR at `f`. On a vertical segment `upper` picks the exit value, otherwise
// the entry value; between vertices the segment is interpolated.
double tpr_at(const RocCurve& c, double f, bool upper) {
  const auto& x = c.fpr;
  if (upper) {
    const auto it = std::upper_bound(x.begin(), x.end(), f);
    const auto i = static_cast<std::size_t>(it - x.begin()) - 1;
    if (x[i] == f || i + 1 == x.size()) {
      return c.tpr[i];
    }
    const double t = (f - x[i]) / (x[i + 1] - x[i]);
    return c.tpr[i] + t * (c.tpr[i + 1] - c.tpr[i]);
  }
  const auto it = std::lower_bound(x.begin(), x.end(), f);
  const auto i = static_cast<std::size_t>(it - x.begin());
  if (i == x.size()) {
    return c.tpr.back();
  }
  if (x[i] == f || i == 0) {
    return c.tpr[i];
  }
  const double t = (f - x[i - 1]) / (x[i] - x[i - 1]);
  return c.tpr[i - 1] + t * (c.tpr[i] - c.tpr[i - 1]);
}

struct Stats {
  double mean = 0.0;
  double std = 0.0;
};

template <class F>
Stats stats_of(std::span<const EvalReport> reports, F get) {
  Stats s;
  for (const auto& r : reports) {
    s.mean += get(r);
  }
  s.mean /= static_cast<double>(reports.size());
  double var = 0.0;
  for (const auto& r : reports) {
    const double d = get(r) - s.mean;
    var += d * d;
  }
  s.std = std::sqrt(var / static_cast<double>(reports.size()));
  return s;
}

nlohmann::ordered_json metrics_json(const LabelMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"accuracy", m.accuracy}};
}

nlohmann::ordered_json curve_json(const RocCurve& c) {
  return {{"auc", c.auc}, {"fpr", c.fpr}, {"tpr", c.tpr}};
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

}  // namespace

std::vector<LabelVector> binarize(std::span<const Scores> scores, double threshold) {
  std::vector<LabelVector> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      const double s = scores[i][l];
      if (!(s >= 0.0 && s <= 1.0)) {
        throw DataError("binarize: score " + std::to_string(s) + " outside [0,1] at row " + std::to_string(i));
      }
      out[i].bits[l] = s >= threshold ? 1 : 0;
    }
  }
  return out;
}

ClassificationMetrics per_label_metrics(std::span<const LabelVector> predicted, std::span<const LabelVector> truth) {
  if (predicted.size() != truth.size()) {
    throw ShapeError("per_label_metrics: " + std::to_string(predicted.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) {
    throw DataError("per_label_metrics: no samples");
  }
  ClassificationMetrics m;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      const bool p = predicted[i].bits[l] != 0;
      const bool t = truth[i].bits[l] != 0;
      auto& c = m.confusion[l];
      (p ? (t ? c.tp : c.fp) : (t ? c.fn : c.tn))++;
    }
    exact += predicted[i] == truth[i] ? 1 : 0;
    ++m.combinations[truth[i].mask()][predicted[i].mask()];
  }
  const std::size_t n = truth.size();
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    const auto& c = m.confusion[l];
    auto& out = m.labels[l];
    const std::string name(kLabelNames[l]);
    if (c.tp + c.fp == 0) {
      m.warnings.push_back(name + ": precision undefined (no predicted positives), reported as 0");
    }
    if (c.tp + c.fn == 0) {
      m.warnings.push_back(name + ": recall undefined (no actual positives), reported as 0");
    }
    out.precision = ratio(c.tp, c.tp + c.fp);
    out.recall = ratio(c.tp, c.tp + c.fn);
    const double pr = out.precision + out.recall;
    out.f1 = pr > 0 ? 2 * out.precision * out.recall / pr : 0.0;
    out.accuracy = ratio(c.tp + c.tn, n);
  }
  m.subset_accuracy = ratio(exact, n);
  return m;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> truth) {
  if (scores.size() != truth.size()) {
    throw ShapeError("roc_curve: scores and truth differ in length");
  }
  std::size_t pos = 0;
  for (const auto t : truth) {
    pos += t ? 1 : 0;
  }
  const std::size_t neg = truth.size() - pos;
  if (pos == 0 || neg == 0) {
    throw DataError("undefined ROC: truth needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve c;
  c.fpr.push_back(0.0);
  c.tpr.push_back(0.0);
  std::size_t tp = 0;
  std::size_t fp = 0;
  // Twice the area in units of one (positive, negative) pair, kept integral.
  std::uint64_t area2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const std::size_t tp_before = tp;
    const std::size_t fp_before = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      (truth[order[i]] ? tp : fp)++;
    }
    area2 += static_cast<std::uint64_t>(fp - fp_before) * (tp_before + tp);
    c.fpr.push_back(ratio(fp, neg));
    c.tpr.push_back(ratio(tp, pos));
  }
  c.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return c;
}

double trapezoid_auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.fpr.size(); ++i) {
    area += (curve.fpr[i] - curve.fpr[i - 1]) * (curve.tpr[i] + curve.tpr[i - 1]) / 2.0;
  }
  return area;
}

RocSet micro_macro_roc(std::span<const Scores> scores, std::span<const LabelVector> truth) {
  if (scores.size() != truth.size()) {
    throw ShapeError("micro_macro_roc: scores and truth differ in length");
  }
  RocSet set;
  std::vector<double> pooled_scores;
  std::vector<std::uint8_t> pooled_truth;
  pooled_scores.reserve(scores.size() * kNumLabels);
  pooled_truth.reserve(scores.size() * kNumLabels);
  std::vector<double> column(scores.size());
  std::vector<std::uint8_t> bits(scores.size());
  std::vector<const RocCurve*> defined;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      column[i] = scores[i][l];
      bits[i] = truth[i].bits[l];
      pooled_scores.push_back(column[i]);
      pooled_truth.push_back(bits[i]);
    }
    try {
      set.labels[l] = roc_curve(column, bits);
      defined.push_back(&*set.labels[l]);
    } catch (const DataError&) {
      set.warnings.push_back(std::string(kLabelNames[l]) + ": ROC undefined (single-class truth), excluded from macro");
    }
  }
  set.micro = roc_curve(pooled_scores, pooled_truth);
  if (defined.empty()) {
    throw DataError("undefined ROC: no label has both classes");
  }

  std::vector<double> grid;
  for (const auto* c : defined) {
    grid.insert(grid.end(), c->fpr.begin(), c->fpr.end());
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const auto k = static_cast<double>(defined.size());
  for (const double f : grid) {
    double lo = 0.0;
    double hi = 0.0;
    for (const auto* c : defined) {
      lo += tpr_at(*c, f, false);
      hi += tpr_at(*c, f, true);
    }
    set.macro.fpr.push_back(f);
    set.macro.tpr.push_back(lo / k);
    if (hi != lo) {
      set.macro.fpr.push_back(f);
      set.macro.tpr.push_back(hi / k);
    }
  }
  set.macro.auc = trapezoid_auc(set.macro);
  return set;
}

double tumor_stroma_ratio(std::span<const LabelVector> predicted, bool inverse) {
  std::size_t stroma = 0;
  std::size_t tumor = 0;
  for (const auto& p : predicted) {
    stroma += p.bits[kInterstitial] ? 1 : 0;
    tumor += p.bits[kTumor] ? 1 : 0;
  }
  if (stroma + tumor == 0) {
    throw DataError("tumor-stroma ratio undefined: no stroma and no tumor tiles");
  }
  return ratio(inverse ? tumor : stroma, stroma + tumor);
}

EvalReport evaluate(std::span<const Scores> scores, std::span<const LabelVector> truth, double threshold) {
  EvalReport r;
  r.threshold = threshold;
  r.num_samples = truth.size();
  const auto predicted = binarize(scores, threshold);
  r.metrics = per_label_metrics(predicted, truth);
  r.roc = micro_macro_roc(scores, truth);
  try {
    r.tumor_stroma_ratio = tumor_stroma_ratio(predicted);
  } catch (const DataError&) {
    r.tumor_stroma_ratio.reset();
  }
  return r;
}

RocCurve vertical_average(std::span<const RocCurve> curves, std::size_t grid_points) {
  if (curves.empty() || grid_points < 2) {
    throw DataError("vertical_average: need at least one curve and two grid points");
  }
  RocCurve out;
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double f = static_cast<double>(g) / static_cast<double>(grid_points - 1);
    double sum = 0.0;
    for (const auto& c : curves) {
      sum += tpr_at(c, f, true);
    }
    out.fpr.push_back(f);
    out.tpr.push_back(sum / static_cast<double>(curves.size()));
  }
  // Keep the (0,0) anchor so the averaged curve starts at the origin.
  out.fpr.insert(out.fpr.begin(), 0.0);
  out.tpr.insert(out.tpr.begin(), 0.0);
  out.auc = trapezoid_auc(out);
  return out;
}

AggregateReport aggregate_rounds(std::span<const EvalReport> reports) {
  if (reports.empty()) {
    throw DataError("aggregate_rounds: no reports");
  }
  for (const auto& r : reports) {
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      if (r.roc.labels[l].has_value() != reports.front().roc.labels[l].has_value()) {
        throw DataError("aggregate_rounds: label sets differ between rounds (" + std::string(kLabelNames[l]) + ")");
      }
    }
  }
  AggregateReport agg;
  agg.rounds = reports.size();
  EvalReport& mean = agg.mean;
  mean.threshold = reports.front().threshold;
  for (const auto& r : reports) {
    mean.num_samples += r.num_samples;
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      auto& c = mean.metrics.confusion[l];
      c.tp += r.metrics.confusion[l].tp;
      c.fp += r.metrics.confusion[l].fp;
      c.fn += r.metrics.confusion[l].fn;
      c.tn += r.metrics.confusion[l].tn;
    }
    for (const auto& [t, row] : r.metrics.combinations) {
      for (const auto& [p, count] : row) {
        mean.metrics.combinations[t][p] += count;
      }
    }
    mean.metrics.warnings.insert(mean.metrics.warnings.end(), r.metrics.warnings.begin(), r.metrics.warnings.end());
    mean.roc.warnings.insert(mean.roc.warnings.end(), r.roc.warnings.begin(), r.roc.warnings.end());
  }
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    const auto p = stats_of(reports, [l](const EvalReport& r) { return r.metrics.labels[l].precision; });
    const auto rc = stats_of(reports, [l](const EvalReport& r) { return r.metrics.labels[l].recall; });
    const auto f1 = stats_of(reports, [l](const EvalReport& r) { return r.metrics.labels[l].f1; });
    const auto acc = stats_of(reports, [l](const EvalReport& r) { return r.metrics.labels[l].accuracy; });
    mean.metrics.labels[l] = {p.mean, rc.mean, f1.mean, acc.mean};
    agg.std[l] = {p.std, rc.std, f1.std, acc.std};
    if (reports.front().roc.labels[l]) {
      std::vector<RocCurve> curves;
      for (const auto& r : reports) {
        curves.push_back(*r.roc.labels[l]);
      }
      mean.roc.labels[l] = vertical_average(curves);
      const auto auc = stats_of(reports, [l](const EvalReport& r) { return r.roc.labels[l]->auc; });
      mean.roc.labels[l]->auc = auc.mean;
      agg.auc_std[l] = auc.std;
    }
  }
  const auto subset = stats_of(reports, [](const EvalReport& r) { return r.metrics.subset_accuracy; });
  mean.metrics.subset_accuracy = subset.mean;
  agg.subset_accuracy_std = subset.std;

  std::vector<RocCurve> micro;
  std::vector<RocCurve> macro;
  for (const auto& r : reports) {
    micro.push_back(r.roc.micro);
    macro.push_back(r.roc.macro);
  }
  mean.roc.micro = vertical_average(micro);
  mean.roc.macro = vertical_average(macro);
  const auto micro_auc = stats_of(reports, [](const EvalReport& r) { return r.roc.micro.auc; });
  const auto macro_auc = stats_of(reports, [](const EvalReport& r) { return r.roc.macro.auc; });
  mean.roc.micro.auc = micro_auc.mean;
  mean.roc.macro.auc = macro_auc.mean;
  agg.micro_auc_std = micro_auc.std;
  agg.macro_auc_std = macro_auc.std;

  if (std::all_of(reports.begin(), reports.end(), [](const EvalReport& r) { return r.tumor_stroma_ratio.has_value(); })) {
    mean.tumor_stroma_ratio = stats_of(reports, [](const EvalReport& r) { return *r.tumor_stroma_ratio; }).mean;
  }
  return agg;
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["num_samples"] = report.num_samples;
  j["threshold"] = report.threshold;
  nlohmann::ordered_json labels;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    auto entry = metrics_json(report.metrics.labels[l]);
    const auto& c = report.metrics.confusion[l];
    entry["confusion"] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
    entry["auc"] = report.roc.labels[l] ? nlohmann::ordered_json(report.roc.labels[l]->auc) : nlohmann::ordered_json(nullptr);
    labels[std::string(kLabelNames[l])] = std::move(entry);
  }
  j["labels"] = std::move(labels);
  j["subset_accuracy"] = report.metrics.subset_accuracy;
  nlohmann::ordered_json combos = nlohmann::ordered_json::array();
  for (const auto& [t, row] : report.metrics.combinations) {
    for (const auto& [p, count] : row) {
      combos.push_back({{"truth", combination_name(t)}, {"predicted", combination_name(p)}, {"count", count}});
    }
  }
  j["combination_confusion"] = std::move(combos);
  nlohmann::ordered_json roc;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    roc[std::string(kLabelNames[l])] = report.roc.labels[l] ? curve_json(*report.roc.labels[l]) : nlohmann::ordered_json(nullptr);
  }
  roc["micro"] = curve_json(report.roc.micro);
  roc["macro"] = curve_json(report.roc.macro);
  j["roc"] = std::move(roc);
  j["tumor_stroma_ratio"] = report.tumor_stroma_ratio ? nlohmann::ordered_json(*report.tumor_stroma_ratio) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json warnings = report.metrics.warnings;
  for (const auto& w : report.roc.warnings) {
    warnings.push_back(w);
  }
  j["warnings"] = std::move(warnings);
  return j;
}

nlohmann::ordered_json to_json(const AggregateReport& report) {
  nlohmann::ordered_json j;
  j["rounds"] = report.rounds;
  j["mean"] = to_json(report.mean);
  nlohmann::ordered_json std_labels;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    auto entry = metrics_json(report.std[l]);
    entry["auc"] = report.auc_std[l];
    std_labels[std::string(kLabelNames[l])] = std::move(entry);
  }
  j["std"] = {{"labels", std::move(std_labels)},
              {"subset_accuracy", report.subset_accuracy_std},
              {"micro_auc", report.micro_auc_std},
              {"macro_auc", report.macro_auc_std}};
  return j;
}

std::string roc_csv(const RocCurve& curve) {
  std::string out = "fpr,tpr\n";
  for (std::size_t i = 0; i < curve.fpr.size(); ++i) {
    out += fmt("%.10g", curve.fpr[i]) + "," + fmt("%.10g", curve.tpr[i]) + "\n";
  }
  return out;
}

std::string roc_svg(const RocSet& roc, const std::string& title) {
  constexpr double kLeft = 60, kTop = 40, kSize = 400;
  auto px = [&](double f) { return fmt("%.2f", kLeft + f * kSize); };
  auto py = [&](double t) { return fmt("%.2f", kTop + (1.0 - t) * kSize); };
  auto polyline = [&](const RocCurve& c, const char* color, const char* dash) {
    std::string pts;
    for (std::size_t i = 0; i < c.fpr.size(); ++i) {
      pts += (i ? " " : "") + px(c.fpr[i]) + "," + py(c.tpr[i]);
    }
    return std::string("  <polyline fill=\"none\" stroke=\"") + color + "\" stroke-width=\"2\"" +
           (dash[0] ? std::string(" stroke-dasharray=\"") + dash + "\"" : "") + " points=\"" + pts + "\"/>\n";
  };

  struct Entry {
    std::string name;
    const RocCurve* curve;
    const char* color;
    const char* dash;
  };
  constexpr const char* kColors[kNumLabels] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};
  std::vector<Entry> entries = {{"micro-average", &roc.micro, "#9467bd", "6,3"},
                                {"macro-average", &roc.macro, "#8c564b", "2,2"}};
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    if (roc.labels[l]) {
      entries.push_back({std::string(kLabelNames[l]), &*roc.labels[l], kColors[l], ""});
    }
  }

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"500\" viewBox=\"0 0 720 500\">\n";
  svg += "  <rect width=\"720\" height=\"500\" fill=\"white\"/>\n";
  svg += "  <text x=\"260\" y=\"25\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">" + title +
         "</text>\n";
  svg += "  <rect x=\"60\" y=\"40\" width=\"400\" height=\"400\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = k / 5.0;
    svg += "  <text x=\"" + px(v) + "\" y=\"458\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" +
           fmt("%.1f", v) + "</text>\n";
    svg += "  <text x=\"52\" y=\"" + fmt("%.2f", kTop + (1.0 - v) * kSize + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" + fmt("%.1f", v) + "</text>\n";
  }
  svg += "  <text x=\"260\" y=\"485\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">False positive "
         "rate</text>\n";
  svg += "  <text x=\"18\" y=\"240\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 18 240)\">True positive rate</text>\n";
  svg += "  <line x1=\"" + px(0) + "\" y1=\"" + py(0) + "\" x2=\"" + px(1) + "\" y2=\"" + py(1) +
         "\" stroke=\"#999999\" stroke-dasharray=\"4,4\"/>\n";
  for (const auto& e : entries) {
    svg += polyline(*e.curve, e.color, e.dash);
  }
  double y = 60;
  for (const auto& e : entries) {
    svg += "  <line x1=\"475\" y1=\"" + fmt("%.0f", y) + "\" x2=\"500\" y2=\"" + fmt("%.0f", y) + "\" stroke=\"" +
           e.color + "\" stroke-width=\"2\"" + (e.dash[0] ? std::string(" stroke-dasharray=\"") + e.dash + "\"" : "") +
           "/>\n";
    svg += "  <text x=\"506\" y=\"" + fmt("%.0f", y + 4) + "\" font-family=\"sans-serif\" font-size=\"11\">" + e.name +
           " (AUC = " + fmt("%.4f", e.curve->auc) + ")</text>\n";
    y += 20;
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace ldcsf::eval
