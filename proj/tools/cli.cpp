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

#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ldcsf/attention.hpp"
#include "ldcsf/checkpoint.hpp"
#include "ldcsf/data.hpp"
#include "ldcsf/errors.hpp"
#include "ldcsf/eval.hpp"
#include "ldcsf/gradcheck.hpp"
#include "ldcsf/image.hpp"
#include "ldcsf/parallel.hpp"
#include "ldcsf/train.hpp"

namespace ldcsf::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string format(const char* fmt, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw DataError("cannot write " + path.string());
  }
  f << text;
  if (!f) {
    throw DataError("write failed: " + path.string());
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) {
    throw DataError("cannot open " + path.string());
  }
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw DataError("cannot create " + dir.string() + ": " + ec.message());
  }
}

ordered_json label_list(const LabelVector& v) {
  ordered_json out = ordered_json::array();
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    if (v.bits[l]) {
      out.push_back(kLabelNames[l]);
    }
  }
  return out;
}

LabelVector parse_label_list(const json& names) {
  LabelVector v;
  for (const auto& n : names) {
    const auto idx = label_index(n.get<std::string>());
    if (!idx) {
      throw DataError("unknown label " + n.dump());
    }
    v.bits[*idx] = 1;
  }
  return v;
}

void print_counts(std::ostream& out, const std::map<unsigned, std::size_t>& before,
                  const std::map<unsigned, std::size_t>& after) {
  out << format("%-36s %8s %8s\n", "combination", "tiles", "kept");
  std::size_t total_before = 0;
  std::size_t total_after = 0;
  for (const auto& [mask, n] : before) {
    const auto it = after.find(mask);
    const std::size_t kept = it == after.end() ? 0 : it->second;
    out << format("%-36s %8zu %8zu\n", combination_name(mask).c_str(), n, kept);
    total_before += n;
    total_after += kept;
  }
  out << format("%-36s %8zu %8zu\n", "total", total_before, total_after);
}

// ---- predictions files

struct Prediction {
  std::string path;
  std::size_t x = 0;
  std::size_t y = 0;
  eval::Scores scores{};
  std::optional<LabelVector> truth;
};

ordered_json prediction_json(const Prediction& p, double threshold) {
  ordered_json j;
  j["path"] = p.path;
  j["x"] = p.x;
  j["y"] = p.y;
  ordered_json s;
  LabelVector predicted;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    s[std::string(kLabelNames[l])] = p.scores[l];
    predicted.bits[l] = p.scores[l] >= threshold ? 1 : 0;
  }
  j["scores"] = s;
  j["predicted"] = label_list(predicted);
  if (p.truth) {
    j["labels"] = label_list(*p.truth);
  }
  return j;
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  std::ifstream f(path);
  if (!f) {
    throw DataError("cannot open " + path.string());
  }
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      const auto j = json::parse(line);
      Prediction p;
      p.path = j.value("path", "");
      p.x = j.value("x", std::size_t{0});
      p.y = j.value("y", std::size_t{0});
      const auto& s = j.at("scores");
      for (std::size_t l = 0; l < kNumLabels; ++l) {
        p.scores[l] = s.at(std::string(kLabelNames[l])).get<double>();
      }
      if (j.contains("labels")) {
        p.truth = parse_label_list(j.at("labels"));
      }
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (out.empty()) {
    throw DataError(path.string() + " has no predictions");
  }
  return out;
}

void split_predictions(const std::vector<Prediction>& preds, std::vector<eval::Scores>& scores,
                       std::vector<LabelVector>& truth) {
  for (const auto& p : preds) {
    if (!p.truth) {
      throw DataError("prediction for '" + p.path + "' has no ground-truth labels");
    }
    scores.push_back(p.scores);
    truth.push_back(*p.truth);
  }
}

void write_roc_files(const fs::path& dir, const eval::RocSet& roc, const std::string& title) {
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    if (roc.labels[l]) {
      write_text(dir / ("roc_" + std::string(kLabelNames[l]) + ".csv"), eval::roc_csv(*roc.labels[l]));
    }
  }
  write_text(dir / "roc_micro.csv", eval::roc_csv(roc.micro));
  write_text(dir / "roc_macro.csv", eval::roc_csv(roc.macro));
  write_text(dir / "roc.svg", eval::roc_svg(roc, title));
}

void print_report(std::ostream& out, const eval::EvalReport& r) {
  out << format("%-20s %9s %9s %9s %9s %9s\n", "label", "precision", "recall", "f1", "accuracy", "auc");
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    const auto& m = r.metrics.labels[l];
    const std::string auc = r.roc.labels[l] ? format("%9.4f", r.roc.labels[l]->auc) : format("%9s", "n/a");
    out << format("%-20s %9.4f %9.4f %9.4f %9.4f %s\n", std::string(kLabelNames[l]).c_str(), m.precision, m.recall,
                  m.f1, m.accuracy, auc.c_str());
  }
  out << format("subset accuracy %.4f  micro auc %.4f  macro auc %.4f\n", r.metrics.subset_accuracy, r.roc.micro.auc,
                r.roc.macro.auc);
}

// ---- model loading

struct LoadedModel {
  Checkpoint ckpt;
  model::ModelConfig cfg;
  std::unique_ptr<model::LdcsfModel<float>> net;
  std::optional<std::size_t> round;
};

LoadedModel load_model(const fs::path& path) {
  LoadedModel m;
  m.ckpt = read_checkpoint(path);
  m.cfg = model::ModelConfig::from_json(m.ckpt.config);
  m.net = std::make_unique<model::LdcsfModel<float>>(m.cfg, 0);
  restore(m.ckpt, *m.net, nullptr);
  m.net->set_mode(nn::Mode::kEval);
  if (m.ckpt.state.contains("round")) {
    m.round = m.ckpt.state.at("round").get<std::size_t>();
  }
  return m;
}

std::vector<std::size_t> select(const train::Dataset& data, const std::string& split, std::optional<std::size_t> round) {
  if (split == "all") {
    std::vector<std::size_t> all(data.records.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
      all[i] = i;
    }
    return all;
  }
  if (!round) {
    throw ConfigError("--round is required: the checkpoint does not record one");
  }
  auto idx = data.indices(*round, data::parse_split(split));
  if (idx.empty()) {
    throw DataError("split '" + split + "' of round " + std::to_string(*round) + " is empty");
  }
  return idx;
}

std::vector<Prediction> run_predict(LoadedModel& m, const train::Dataset& data, const std::vector<std::size_t>& idx,
                                    std::size_t batch, std::size_t workers) {
  const auto scores = train::predict(*m.net, data, idx, batch, workers);
  std::vector<Prediction> out;
  out.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& rec = data.records[idx[k]];
    out.push_back({rec.path, rec.x, rec.y, scores[k], rec.labels});
  }
  return out;
}

// ---- subcommands

struct SynthArgs {
  fs::path out;
  std::size_t cells = 6;
  std::size_t tile = 224;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  auto s = data::synth_slide(a.cells, a.tile, a.seed);
  make_dir(a.out / "masks");
  write_png(a.out / "slide.png", s.slide);
  out << (a.out / "slide.png").string() << '\n';
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    if (s.masks.masks[l]) {
      const auto p = a.out / "masks" / (std::string(kLabelNames[l]) + ".png");
      write_mask_png(p, *s.masks.masks[l]);
      out << p.string() << '\n';
    }
  }
  return kOk;
}

struct PatchifyArgs {
  fs::path slide;
  std::vector<std::string> masks;
  fs::path out;
  std::size_t tile = 224;
  std::size_t stride = 0;  // 0: same as tile
  double tau = 0.05;
  double balance_ratio = 3.0;
  std::uint64_t seed = 0;
  std::size_t rounds = 10;
  std::size_t workers = 1;
};

int cmd_patchify(const PatchifyArgs& a, std::ostream& out) {
  const std::size_t stride = a.stride == 0 ? a.tile : a.stride;
  const RgbImage slide = read_png(a.slide);
  data::RegionMasks regions;
  regions.width = slide.width;
  regions.height = slide.height;
  for (const auto& spec : a.masks) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--mask expects label=path, got '" + spec + "'");
    }
    const auto label = label_index(spec.substr(0, eq));
    if (!label) {
      throw ConfigError("unknown label '" + spec.substr(0, eq) + "'");
    }
    regions.set(*label, read_mask_png(spec.substr(eq + 1)));
  }

  std::vector<data::TileRecord> records;
  for (const auto& o : data::tile_grid(slide.width, slide.height, a.tile, stride)) {
    const auto labels = data::assign_labels(o, a.tile, regions, a.tau);
    if (!labels.any()) {
      continue;
    }
    data::TileRecord r;
    r.path = "tiles/" + format("x%06zu_y%06zu.png", o.x, o.y);
    r.x = o.x;
    r.y = o.y;
    r.labels = labels;
    records.push_back(std::move(r));
  }
  if (records.empty()) {
    throw DataError("no tile reaches the label threshold in any mask");
  }
  const auto before = data::combination_counts(records);
  auto kept = data::balance(records, a.balance_ratio, a.seed);
  if (a.rounds > 0) {
    data::make_splits(kept, a.rounds, {}, a.seed);
  }

  make_dir(a.out / "tiles");
  parallel_for(kept.size(), a.workers, [&](std::size_t i) {
    write_png(a.out / kept[i].path, crop(slide, kept[i].x, kept[i].y, a.tile, a.tile));
  });
  data::write_manifest(a.out / "manifest.jsonl", kept);

  ordered_json echo;
  echo["slide"] = a.slide.string();
  echo["masks"] = a.masks;
  echo["tile"] = a.tile;
  echo["stride"] = stride;
  echo["tau"] = a.tau;
  echo["balance_ratio"] = a.balance_ratio;
  echo["seed"] = a.seed;
  echo["rounds"] = a.rounds;
  write_text(a.out / "patchify_config.json", echo.dump(2) + "\n");

  print_counts(out, before, data::combination_counts(kept));
  return kOk;
}

struct SplitsArgs {
  fs::path manifest;
  fs::path out;
  std::size_t rounds = 10;
  std::uint64_t seed = 0;
  std::vector<double> fractions{0.7, 0.1, 0.2};
};

int cmd_splits(const SplitsArgs& a, std::ostream& out) {
  auto records = data::read_manifest(a.manifest);
  if (a.fractions.size() != 3) {
    throw ConfigError("--fractions expects train,val,test");
  }
  data::make_splits(records, a.rounds, {a.fractions[0], a.fractions[1], a.fractions[2]}, a.seed);
  make_dir(a.out);
  // tile paths stay valid when the manifest moves to another directory
  const auto src = fs::absolute(a.manifest).parent_path();
  const auto dst = fs::absolute(a.out);
  if (fs::weakly_canonical(src) != fs::weakly_canonical(dst)) {
    for (auto& r : records) {
      r.path = fs::relative(src / r.path, dst).generic_string();
    }
  }
  data::write_manifest(a.out / "manifest.jsonl", records);
  for (std::size_t round = 0; round < a.rounds; ++round) {
    std::array<std::size_t, 3> n{};
    for (const auto& r : records) {
      ++n[static_cast<std::size_t>(*r.split_in(round))];
    }
    out << format("round %zu: train %zu val %zu test %zu\n", round, n[0], n[1], n[2]);
  }
  return kOk;
}

struct TrainArgs {
  fs::path config;
  fs::path manifest;
  fs::path out;
  fs::path resume;
  bool toy = false;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double lr = 0;
  double momentum = 0;
  double weight_decay = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> rounds;
  std::size_t checkpoint_every = 0;
  std::size_t early_stop = 0;
  std::size_t workers = 1;
  bool augment = true;
  bool ldc = true;
  bool fr = true;
  std::size_t img_size = 0;
  std::size_t embed_dim = 0;
  std::size_t window = 0;
  double dropout = 0;
  double threshold = 0.5;
};

// Flags given on the command line win over the config file.
train::TrainConfig effective_config(const TrainArgs& a, const CLI::App& sub) {
  train::TrainConfig cfg;
  if (!a.config.empty()) {
    cfg = train::TrainConfig::from_json(read_json_file(a.config));
  }
  auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (a.toy) {
    cfg.model = model::ModelConfig::toy();
  }
  if (given("--epochs")) cfg.epochs = a.epochs;
  if (given("--batch-size")) cfg.batch_size = a.batch_size;
  if (given("--lr")) cfg.sgd.learning_rate = a.lr;
  if (given("--momentum")) cfg.sgd.momentum = a.momentum;
  if (given("--weight-decay")) cfg.sgd.weight_decay = a.weight_decay;
  if (given("--seed")) cfg.seed = a.seed;
  if (given("--rounds")) cfg.rounds = a.rounds;
  if (given("--checkpoint-every")) cfg.checkpoint_every = a.checkpoint_every;
  if (given("--early-stop")) cfg.early_stop = a.early_stop;
  if (given("--workers")) cfg.workers = a.workers;
  if (given("--augment")) cfg.augment = a.augment;
  if (given("--ldc")) cfg.model.ldc_enabled = a.ldc;
  if (given("--fr")) cfg.model.fr_enabled = a.fr;
  if (given("--img-size")) cfg.model.img_size = a.img_size;
  if (given("--embed-dim")) {
    cfg.model.embed_dim = a.embed_dim;
    cfg.model.heads = model::ModelConfig::scaled_heads(a.embed_dim);
  }
  if (given("--window")) cfg.model.window = a.window;
  if (given("--dropout")) cfg.model.dropout_rate = a.dropout;
  if (given("--threshold")) cfg.threshold = a.threshold;
  cfg.validate();
  return cfg;
}

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out) {
  const auto cfg = effective_config(a, sub);
  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) {
    resume = read_checkpoint(a.resume);
  }
  make_dir(a.out);
  write_text(a.out / "effective_config.json", cfg.to_json().dump(2) + "\n");
  const auto data = train::load_dataset(a.manifest, cfg.model.img_size, cfg.workers);

  const auto log_path = a.out / "train_log.jsonl";
  std::ofstream log(log_path, std::ios::binary | (resume ? std::ios::app : std::ios::trunc));
  if (!log) {
    throw DataError("cannot write " + log_path.string());
  }
  const auto results = train::train(cfg, data, log, a.out / "checkpoints", resume ? &*resume : nullptr);
  for (const auto& r : results) {
    out << format("round %zu: %zu steps, train L %.6f", r.round, r.steps, r.last_train.total);
    if (r.last_val) {
      out << format(", val L %.6f, val subset accuracy %.4f", r.last_val->loss.total, r.last_val->subset_accuracy);
    }
    out << '\n';
  }
  return kOk;
}

struct EvalArgs {
  std::vector<fs::path> checkpoints;
  fs::path manifest;
  fs::path predictions;
  fs::path out;
  std::string split = "test";
  std::optional<std::size_t> round;
  double threshold = 0.5;
  std::size_t batch_size = 32;
  std::size_t workers = 1;
  std::string title = "ROC";
};

eval::EvalReport write_eval(const fs::path& dir, const std::vector<Prediction>& preds, double threshold,
                            const std::string& title) {
  std::vector<eval::Scores> scores;
  std::vector<LabelVector> truth;
  split_predictions(preds, scores, truth);
  auto report = eval::evaluate(scores, truth, threshold);
  make_dir(dir);
  write_text(dir / "report.json", eval::to_json(report).dump(2) + "\n");
  write_roc_files(dir, report.roc, title);
  return report;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  if (a.predictions.empty() == a.checkpoints.empty()) {
    throw ConfigError("eval needs either --predictions or --checkpoint");
  }
  if (!a.predictions.empty()) {
    const auto report = write_eval(a.out, read_predictions(a.predictions), a.threshold, a.title);
    print_report(out, report);
    for (const auto& w : report.roc.warnings) {
      err << "warning: " << w << '\n';
    }
    return kOk;
  }
  if (a.manifest.empty()) {
    throw ConfigError("--checkpoint needs --manifest");
  }
  std::optional<train::Dataset> data;
  std::size_t img_size = 0;
  std::vector<eval::EvalReport> reports;
  for (const auto& path : a.checkpoints) {
    auto m = load_model(path);
    if (!data) {
      img_size = m.cfg.img_size;
      data = train::load_dataset(a.manifest, img_size, a.workers);
    } else if (m.cfg.img_size != img_size) {
      throw ConfigError("checkpoints disagree on img_size");
    }
    const auto round = a.round ? a.round : m.round;
    const auto idx = select(*data, a.split, round);
    const auto preds = run_predict(m, *data, idx, a.batch_size, a.workers);
    const fs::path dir = a.checkpoints.size() == 1 ? a.out : a.out / ("round" + std::to_string(round.value_or(0)));
    reports.push_back(write_eval(dir, preds, a.threshold, a.title));
    if (a.checkpoints.size() > 1) {
      out << "== " << path.string() << '\n';
    }
    print_report(out, reports.back());
  }
  if (reports.size() > 1) {
    const auto agg = eval::aggregate_rounds(reports);
    write_text(a.out / "aggregate.json", eval::to_json(agg).dump(2) + "\n");
    write_roc_files(a.out, agg.mean.roc, a.title);
    out << "== mean over " << agg.rounds << " rounds\n";
    print_report(out, agg.mean);
  }
  return kOk;
}

struct PredictArgs {
  fs::path checkpoint;
  fs::path manifest;
  fs::path out;
  std::string split = "all";
  std::optional<std::size_t> round;
  double threshold = 0.5;
  std::size_t batch_size = 32;
  std::size_t workers = 1;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  auto m = load_model(a.checkpoint);
  const auto data = train::load_dataset(a.manifest, m.cfg.img_size, a.workers);
  const auto idx = select(data, a.split, a.round ? a.round : m.round);
  const auto preds = run_predict(m, data, idx, a.batch_size, a.workers);
  make_dir(a.out);
  std::string text;
  for (const auto& p : preds) {
    text += prediction_json(p, a.threshold).dump() + '\n';
  }
  write_text(a.out / "predictions.jsonl", text);
  out << preds.size() << " predictions -> " << (a.out / "predictions.jsonl").string() << '\n';
  return kOk;
}

struct TsrArgs {
  fs::path predictions;
  double threshold = 0.5;
  bool inverse = false;
};

int cmd_tsr(const TsrArgs& a, std::ostream& out) {
  const auto preds = read_predictions(a.predictions);
  std::vector<eval::Scores> scores;
  for (const auto& p : preds) {
    scores.push_back(p.scores);
  }
  const auto labels = eval::binarize(scores, a.threshold);
  out << format("%.6f\n", eval::tumor_stroma_ratio(labels, a.inverse));
  return kOk;
}

struct PlotArgs {
  fs::path predictions;
  fs::path out;
  std::string title = "ROC";
};

int cmd_plot(const PlotArgs& a, std::ostream& out) {
  std::vector<eval::Scores> scores;
  std::vector<LabelVector> truth;
  split_predictions(read_predictions(a.predictions), scores, truth);
  const auto roc = eval::micro_macro_roc(scores, truth);
  make_dir(a.out);
  write_roc_files(a.out, roc, a.title);
  out << (a.out / "roc.svg").string() << '\n';
  return kOk;
}

struct GradcheckArgs {
  bool toy = false;
  gradcheck::Options opts;
};

int cmd_gradcheck(GradcheckArgs a, std::ostream& out) {
  a.opts.include_model = a.toy;
  const auto results = gradcheck::run_suite(a.opts);
  bool ok = true;
  std::size_t total = 0;
  out << format("%-34s %8s %11s  %-28s %s\n", "check", "samples", "max_error", "worst", "status");
  for (const auto& r : results) {
    out << format("%-34s %8zu %11.3e  %-28s %s\n", r.name.c_str(), r.checked, r.max_error, r.worst.c_str(),
                  r.passed ? "PASS" : "FAIL");
    ok = ok && r.passed;
    total += r.checked;
  }
  out << format("%zu entries checked, tolerance %.1e: %s\n", total, a.opts.tolerance, ok ? "PASS" : "FAIL");
  return ok ? kOk : kNumeric;
}

struct FlopsArgs {
  std::uint64_t h = 0;
  std::uint64_t w = 0;
  std::uint64_t c = 0;
  std::uint64_t m = 0;
};

int cmd_flops(const FlopsArgs& a, std::ostream& out) {
  out << attn::wmsa_complexity(a.h, a.w, a.c, a.m) << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-label tissue tile classifier: tiling, training, evaluation", "ldcsf"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth-slide", "Write a synthetic slide with matching label masks");
  s_synth->add_option("--out", synth.out, "Output directory")->required();
  s_synth->add_option("--cells", synth.cells, "Tiles per side")->capture_default_str();
  s_synth->add_option("--tile", synth.tile, "Tile size in pixels")->capture_default_str();
  s_synth->add_option("--seed", synth.seed)->capture_default_str();

  PatchifyArgs patch;
  auto* s_patch = app.add_subcommand("patchify", "Tile a slide, label tiles from masks, balance and split");
  s_patch->add_option("--slide", patch.slide, "Slide raster (PNG)")->required()->check(CLI::ExistingFile);
  s_patch->add_option("--mask,--masks", patch.masks, "label=mask.png, repeatable")->required();
  s_patch->add_option("--out", patch.out, "Output directory")->required();
  s_patch->add_option("--tile", patch.tile)->capture_default_str()->check(CLI::PositiveNumber);
  s_patch->add_option("--stride", patch.stride, "Defaults to --tile");
  s_patch->add_option("--tau", patch.tau, "Minimum mask coverage per label")->capture_default_str();
  s_patch->add_option("--balance-ratio", patch.balance_ratio)->capture_default_str();
  s_patch->add_option("--seed", patch.seed)->capture_default_str();
  s_patch->add_option("--rounds", patch.rounds, "Split rounds; 0 skips splitting")->capture_default_str();
  s_patch->add_option("--workers", patch.workers)->capture_default_str()->check(CLI::PositiveNumber);

  SplitsArgs splits;
  auto* s_splits = app.add_subcommand("splits", "Reassign train/val/test splits of a manifest");
  s_splits->add_option("--manifest", splits.manifest)->required()->check(CLI::ExistingFile);
  s_splits->add_option("--out", splits.out, "Output directory")->required();
  s_splits->add_option("--rounds", splits.rounds)->capture_default_str();
  s_splits->add_option("--seed", splits.seed)->capture_default_str();
  s_splits->add_option("--fractions", splits.fractions, "train val test")->expected(3)->delimiter(',');

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "Train one or more split rounds");
  s_train->add_option("--manifest", tr.manifest)->required()->check(CLI::ExistingFile);
  s_train->add_option("--out", tr.out, "Output directory")->required();
  s_train->add_option("--config", tr.config, "TrainConfig JSON")->check(CLI::ExistingFile);
  s_train->add_option("--resume", tr.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  s_train->add_flag("--toy", tr.toy, "Use the small test model");
  s_train->add_option("--epochs", tr.epochs);
  s_train->add_option("--batch-size", tr.batch_size);
  s_train->add_option("--lr", tr.lr);
  s_train->add_option("--momentum", tr.momentum);
  s_train->add_option("--weight-decay", tr.weight_decay);
  s_train->add_option("--seed", tr.seed);
  s_train->add_option("--rounds", tr.rounds)->delimiter(',');
  s_train->add_option("--checkpoint-every", tr.checkpoint_every);
  s_train->add_option("--early-stop", tr.early_stop, "Patience in epochs");
  s_train->add_option("--workers", tr.workers)->check(CLI::PositiveNumber);
  s_train->add_flag("--augment,!--no-augment", tr.augment);
  s_train->add_flag("--ldc,!--no-ldc", tr.ldc);
  s_train->add_flag("--fr,!--no-fr", tr.fr);
  s_train->add_option("--img-size", tr.img_size);
  s_train->add_option("--embed-dim", tr.embed_dim);
  s_train->add_option("--window", tr.window);
  s_train->add_option("--dropout", tr.dropout);
  s_train->add_option("--threshold", tr.threshold);

  EvalArgs ev;
  auto* s_eval = app.add_subcommand("eval", "Metrics, ROC curves and plots for a split or a predictions file");
  s_eval->add_option("--checkpoint", ev.checkpoints, "Repeat to average rounds")->check(CLI::ExistingFile);
  s_eval->add_option("--manifest", ev.manifest)->check(CLI::ExistingFile);
  s_eval->add_option("--predictions", ev.predictions, "predictions.jsonl with labels")->check(CLI::ExistingFile);
  s_eval->add_option("--out", ev.out, "Output directory")->required();
  s_eval->add_option("--split", ev.split)->capture_default_str()->check(CLI::IsMember({"train", "val", "test", "all"}));
  s_eval->add_option("--round", ev.round, "Defaults to the checkpoint's round");
  s_eval->add_option("--threshold", ev.threshold)->capture_default_str();
  s_eval->add_option("--batch-size", ev.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  s_eval->add_option("--workers", ev.workers)->capture_default_str()->check(CLI::PositiveNumber);
  s_eval->add_option("--title", ev.title)->capture_default_str();

  PredictArgs pr;
  auto* s_pred = app.add_subcommand("predict", "Per-tile scores as JSON lines");
  s_pred->add_option("--checkpoint", pr.checkpoint)->required()->check(CLI::ExistingFile);
  s_pred->add_option("--manifest", pr.manifest)->required()->check(CLI::ExistingFile);
  s_pred->add_option("--out", pr.out, "Output directory")->required();
  s_pred->add_option("--split", pr.split)->capture_default_str()->check(CLI::IsMember({"train", "val", "test", "all"}));
  s_pred->add_option("--round", pr.round);
  s_pred->add_option("--threshold", pr.threshold)->capture_default_str();
  s_pred->add_option("--batch-size", pr.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  s_pred->add_option("--workers", pr.workers)->capture_default_str()->check(CLI::PositiveNumber);

  TsrArgs tsr;
  auto* s_tsr = app.add_subcommand("tsr", "Tumor-stroma ratio of predicted tiles");
  s_tsr->add_option("--predictions", tsr.predictions)->required()->check(CLI::ExistingFile);
  s_tsr->add_option("--threshold", tsr.threshold)->capture_default_str();
  s_tsr->add_flag("--inverse", tsr.inverse, "tumor / (stroma + tumor)");

  PlotArgs plot;
  auto* s_plot = app.add_subcommand("plot-roc", "ROC curves (CSV + SVG) from a predictions file");
  s_plot->add_option("--predictions", plot.predictions)->required()->check(CLI::ExistingFile);
  s_plot->add_option("--out", plot.out, "Output directory")->required();
  s_plot->add_option("--title", plot.title)->capture_default_str();

  GradcheckArgs gc;
  auto* s_gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks in double precision");
  s_gc->add_flag("--toy", gc.toy, "Include the end-to-end toy model");
  s_gc->add_option("--seed", gc.opts.seed)->capture_default_str();
  s_gc->add_option("--samples", gc.opts.samples)->capture_default_str();
  s_gc->add_option("--model-samples", gc.opts.model_samples)->capture_default_str();
  s_gc->add_option("--step", gc.opts.step)->capture_default_str();
  s_gc->add_option("--tolerance", gc.opts.tolerance)->capture_default_str();

  FlopsArgs fl;
  auto* s_fl = app.add_subcommand("flops", "Window attention cost 4hwC^2 + 2M^2hwC");
  s_fl->set_help_flag("--help");  // frees -h for --h
  s_fl->add_option("--h", fl.h)->required();
  s_fl->add_option("--w", fl.w)->required();
  s_fl->add_option("--c", fl.c)->required();
  s_fl->add_option("--m", fl.m)->required();

  std::vector<const char*> argv;
  for (const auto& a : args) {
    argv.push_back(a.c_str());
  }
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s_synth) return cmd_synth(synth, out);
    if (*s_patch) return cmd_patchify(patch, out);
    if (*s_splits) return cmd_splits(splits, out);
    if (*s_train) return cmd_train(tr, *s_train, out);
    if (*s_eval) return cmd_eval(ev, out, err);
    if (*s_pred) return cmd_predict(pr, out);
    if (*s_tsr) return cmd_tsr(tsr, out);
    if (*s_plot) return cmd_plot(plot, out);
    if (*s_gc) return cmd_gradcheck(gc, out);
    if (*s_fl) return cmd_flops(fl, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    // ConfigError and ShapeError
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}

}  // namespace ldcsf::cli
