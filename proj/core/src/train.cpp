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

#include "ldcsf/train.hpp"

#include <cmath>
#include <set>

#include "ldcsf/parallel.hpp"

namespace ldcsf::train {
namespace {

double bce_logit(double z, double y) { return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))); }

nlohmann::ordered_json loss_json(const model::MultiLabelLoss& l) {
  return {{"L", l.total}, {"l_i", l.interstitial}, {"l_m", l.non_tumor}, {"l_t", l.tumor}, {"l_n", l.necrosis}};
}

model::MultiLabelLoss loss_from_json(const nlohmann::json& j) {
  model::MultiLabelLoss l;
  l.total = j.at("L").get<double>();
  l.interstitial = j.at("l_i").get<double>();
  l.non_tumor = j.at("l_m").get<double>();
  l.tumor = j.at("l_t").get<double>();
  l.necrosis = j.at("l_n").get<double>();
  return l;
}

ValidationResult val_from_json(const nlohmann::json& j) {
  ValidationResult v;
  v.loss = loss_from_json(j);
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    v.accuracy[l] = j.at("accuracy").at(std::string(kLabelNames[l])).get<double>();
  }
  v.subset_accuracy = j.at("subset_accuracy").get<double>();
  return v;
}

nlohmann::ordered_json val_json(const ValidationResult& v) {
  nlohmann::ordered_json j = loss_json(v.loss);
  nlohmann::ordered_json acc;
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    acc[std::string(kLabelNames[l])] = v.accuracy[l];
  }
  j["accuracy"] = std::move(acc);
  j["subset_accuracy"] = v.subset_accuracy;
  return j;
}

// Eval-mode logits, one row per index.
std::vector<std::array<double, kNumLabels>> eval_logits(model::LdcsfModel<float>& net, const Dataset& data,
                                                         std::span<const std::size_t> indices, std::size_t batch_size,
                                                         std::size_t workers) {
  const nn::Mode saved = net.mode();
  net.set_mode(nn::Mode::kEval);
  std::vector<std::array<double, kNumLabels>> out(indices.size());
  const std::size_t shards = (indices.size() + batch_size - 1) / batch_size;
  TrainConfig plain;
  try {
    parallel_for(shards, workers, [&](std::size_t s) {
      const std::size_t begin = s * batch_size;
      const auto chunk = indices.subspan(begin, std::min(batch_size, indices.size() - begin));
      const Batch batch = make_batch(data, chunk, plain, 0, 0, false);
      Tape<float> tape(false);
      const Var<float> logits = net.forward(tape, tape.constant(batch.images));
      const auto v = logits.value().data();
      for (std::size_t i = 0; i < chunk.size(); ++i) {
        for (std::size_t l = 0; l < kNumLabels; ++l) {
          out[begin + i][l] = v[i * kNumLabels + l];
        }
      }
    });
  } catch (...) {
    net.set_mode(saved);
    throw;
  }
  net.set_mode(saved);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) {
    throw ConfigError("epochs and batch_size must be >= 1");
  }
  if (rounds.empty()) {
    throw ConfigError("at least one split round is required");
  }
  if (std::set<std::size_t>(rounds.begin(), rounds.end()).size() != rounds.size()) {
    throw ConfigError("split rounds must be distinct");
  }
  if (workers == 0) {
    throw ConfigError("workers must be >= 1");
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ConfigError("threshold must lie in [0,1]");
  }
  if (early_stop && *early_stop == 0) {
    throw ConfigError("early_stop patience must be >= 1");
  }
  const auto& b = augmentation.bounds;
  if (b.hue < 0 || b.sat_low < 0 || b.sat_low > b.sat_high || b.val_low < 0 || b.val_low > b.val_high) {
    throw ConfigError("invalid HSV jitter bounds");
  }
  sgd.validate();
  model.validate();
}

nlohmann::ordered_json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["sgd"] = {{"learning_rate", sgd.learning_rate}, {"momentum", sgd.momentum}, {"weight_decay", sgd.weight_decay}};
  j["seed"] = seed;
  j["rounds"] = rounds;
  j["model"] = nlohmann::ordered_json::parse(model.to_json().dump());
  j["checkpoint_every"] = checkpoint_every;
  j["early_stop"] = early_stop ? nlohmann::ordered_json(*early_stop) : nlohmann::ordered_json(nullptr);
  j["workers"] = workers;
  j["augment"] = augment;
  const auto& a = augmentation;
  j["augmentation"] = {{"horizontal_flip", a.horizontal_flip},
                       {"vertical_flip", a.vertical_flip},
                       {"hsv", a.hsv},
                       {"hue", a.bounds.hue},
                       {"sat_low", a.bounds.sat_low},
                       {"sat_high", a.bounds.sat_high},
                       {"val_low", a.bounds.val_low},
                       {"val_high", a.bounds.val_high}};
  j["threshold"] = threshold;
  return j;
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) {
    throw ConfigError(where + " must be a JSON object");
  }
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"epochs", "batch_size", "sgd", "seed", "rounds", "model", "checkpoint_every", "early_stop", "workers",
                  "augment", "augmentation", "threshold"},
                 "train config");
  TrainConfig cfg;
  try {
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    if (j.contains("sgd")) {
      const auto& s = j.at("sgd");
      reject_unknown(s, {"learning_rate", "momentum", "weight_decay"}, "sgd config");
      cfg.sgd.learning_rate = s.value("learning_rate", cfg.sgd.learning_rate);
      cfg.sgd.momentum = s.value("momentum", cfg.sgd.momentum);
      cfg.sgd.weight_decay = s.value("weight_decay", cfg.sgd.weight_decay);
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.rounds = j.value("rounds", cfg.rounds);
    if (j.contains("model")) {
      cfg.model = model::ModelConfig::from_json(j.at("model"));
    }
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
    if (j.contains("early_stop") && !j.at("early_stop").is_null()) {
      cfg.early_stop = j.at("early_stop").get<std::size_t>();
    }
    cfg.workers = j.value("workers", cfg.workers);
    cfg.augment = j.value("augment", cfg.augment);
    if (j.contains("augmentation")) {
      const auto& a = j.at("augmentation");
      reject_unknown(a, {"horizontal_flip", "vertical_flip", "hsv", "hue", "sat_low", "sat_high", "val_low", "val_high"},
                     "augmentation config");
      auto& o = cfg.augmentation;
      o.horizontal_flip = a.value("horizontal_flip", o.horizontal_flip);
      o.vertical_flip = a.value("vertical_flip", o.vertical_flip);
      o.hsv = a.value("hsv", o.hsv);
      o.bounds.hue = a.value("hue", o.bounds.hue);
      o.bounds.sat_low = a.value("sat_low", o.bounds.sat_low);
      o.bounds.sat_high = a.value("sat_high", o.bounds.sat_high);
      o.bounds.val_low = a.value("val_low", o.bounds.val_low);
      o.bounds.val_high = a.value("val_high", o.bounds.val_high);
    }
    cfg.threshold = j.value("threshold", cfg.threshold);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return cfg;
}

std::vector<std::size_t> Dataset::indices(std::size_t round, data::Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split_in(round) == split) {
      out.push_back(i);
    }
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& manifest, std::size_t img_size, std::size_t workers) {
  Dataset d;
  d.records = data::read_manifest(manifest);
  if (d.records.empty()) {
    throw DataError("manifest " + manifest.string() + " has no records");
  }
  const auto dir = manifest.parent_path();
  d.images.resize(d.records.size());
  parallel_for(d.records.size(), workers, [&](std::size_t i) {
    d.images[i] = resize_bilinear(read_png(dir / d.records[i].path), img_size, img_size);
  });
  return d;
}

Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, const TrainConfig& cfg, std::size_t round,
                 std::size_t epoch, bool augment) {
  if (indices.empty()) {
    throw DataError("make_batch: empty batch");
  }
  const std::size_t side = data.images[indices[0]].width;
  const std::size_t plane = 3 * side * side;
  Batch b{Tensor<float>({indices.size(), 3, side, side}), Tensor<float>({indices.size(), kNumLabels})};
  const Rng base = Rng(cfg.seed).derive("augment");
  parallel_for(indices.size(), cfg.workers, [&](std::size_t i) {
    const std::size_t idx = indices[i];
    const RgbImage& src = data.images[idx];
    if (src.width != side || src.height != side) {
      throw DataError("make_batch: tile " + data.records[idx].path + " has a different size");
    }
    float* dst = b.images.data().data() + i * plane;
    if (augment) {
      Rng rng = base.derive({round, epoch, idx});
      to_planar(data::augment(src, cfg.augmentation, rng), dst);
    } else {
      to_planar(src, dst);
    }
  });
  for (std::size_t i = 0; i < indices.size(); ++i) {
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      b.targets[i * kNumLabels + l] = data.records[indices[i]].labels.bits[l] ? 1.0f : 0.0f;
    }
  }
  return b;
}

std::vector<std::size_t> epoch_order(std::span<const std::size_t> train, std::uint64_t seed, std::size_t round,
                                     std::size_t epoch) {
  std::vector<std::size_t> order(train.begin(), train.end());
  Rng rng = Rng(seed).derive("shuffle").derive({round, epoch});
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

std::vector<eval::Scores> predict(model::LdcsfModel<float>& net, const Dataset& data,
                                  std::span<const std::size_t> indices, std::size_t batch_size, std::size_t workers) {
  const auto logits = eval_logits(net, data, indices, batch_size, workers);
  std::vector<eval::Scores> scores(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      scores[i][l] = 1.0 / (1.0 + std::exp(-logits[i][l]));
    }
  }
  return scores;
}

ValidationResult validate(model::LdcsfModel<float>& net, const Dataset& data, std::span<const std::size_t> indices,
                          const TrainConfig& cfg) {
  if (indices.empty()) {
    throw DataError("validate: empty split");
  }
  const auto logits = eval_logits(net, data, indices, cfg.batch_size, cfg.workers);
  std::array<double, kNumLabels> loss{};
  std::array<std::size_t, kNumLabels> correct{};
  std::size_t exact = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    bool all = true;
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      const double y = data.records[indices[i]].labels.bits[l] ? 1.0 : 0.0;
      const double z = logits[i][l];
      loss[l] += bce_logit(z, y);
      const bool hit = ((1.0 / (1.0 + std::exp(-z))) >= cfg.threshold) == (y > 0.5);
      correct[l] += hit ? 1 : 0;
      all = all && hit;
    }
    exact += all ? 1 : 0;
  }
  const auto n = static_cast<double>(indices.size());
  ValidationResult v;
  v.loss.interstitial = loss[kInterstitial] / n;
  v.loss.non_tumor = loss[kNonTumor] / n;
  v.loss.tumor = loss[kTumor] / n;
  v.loss.necrosis = loss[kNecrosis] / n;
  v.loss.total = model::MultiLabelLoss::sum_of(v.loss.interstitial, v.loss.non_tumor, v.loss.tumor, v.loss.necrosis);
  for (std::size_t l = 0; l < kNumLabels; ++l) {
    v.accuracy[l] = static_cast<double>(correct[l]) / n;
  }
  v.subset_accuracy = static_cast<double>(exact) / n;
  return v;
}

std::uint64_t round_seed(std::uint64_t seed, std::size_t round) {
  return Rng(seed).derive({stream_id("round"), round}).next_u64();
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t round,
                                      std::optional<std::size_t> epoch) {
  const std::string name = "round" + std::to_string(round) +
                           (epoch ? "_epoch" + std::to_string(*epoch) : std::string("_final")) + ".ckpt";
  return dir / name;
}

RoundTrainer::RoundTrainer(const TrainConfig& cfg, const Dataset& data, std::size_t round)
    : cfg_(cfg),
      data_(data),
      round_(round),
      net_(cfg.model, round_seed(cfg.seed, round)),
      opt_(cfg.sgd),
      train_(data.indices(round, data::Split::kTrain)),
      val_(data.indices(round, data::Split::kVal)) {
  cfg_.validate();
  if (train_.empty()) {
    throw DataError("round " + std::to_string(round) + " has an empty train split");
  }
  // Batch norm in the head needs two values per channel when its grid is 1x1.
  if (cfg_.model.grid(model::kNumStages - 1) == 1) {
    const std::size_t tail = train_.size() % cfg_.batch_size;
    if (cfg_.batch_size == 1 || train_.size() == 1 || tail == 1) {
      throw ConfigError("a 1x1 head grid cannot train on a batch of one sample; change batch_size");
    }
  }
}

model::MultiLabelLoss RoundTrainer::step(std::span<const std::size_t> batch, std::size_t epoch) {
  net_.set_mode(nn::Mode::kTrain);
  const Batch b = make_batch(data_, batch, cfg_, round_, epoch, cfg_.augment);
  const auto params = net_.parameters();
  try {
    Tape<float> tape;
    Rng dropout = Rng(cfg_.seed).derive("dropout").derive({round_, step_});
    const Var<float> logits = net_.forward(tape, tape.constant(b.images), &dropout);
    const auto loss = model::multilabel_loss(logits, b.targets);
    if (!std::isfinite(loss.values.total)) {
      throw NumericError("loss is not finite");
    }
    Sgd<float>::zero_grad(params);
    tape.backward(loss.total);
    opt_.step(params);
    ++step_;
    return loss.values;
  } catch (const NumericError& e) {
    throw NumericError("round " + std::to_string(round_) + " epoch " + std::to_string(epoch) + " step " +
                       std::to_string(step_) + ": " + e.what());
  }
}

Checkpoint RoundTrainer::snapshot() {
  nlohmann::json state;
  state["round"] = round_;
  state["next_epoch"] = next_epoch_;
  state["step"] = step_;
  state["best_val_loss"] = best_val_ ? nlohmann::json(*best_val_) : nlohmann::json(nullptr);
  state["stale_epochs"] = stale_epochs_;
  state["completed_rounds"] = history;
  state["progress"] = nlohmann::json::parse(round_summary(progress_).dump());
  return capture(net_, &opt_, std::move(state));
}

void RoundTrainer::resume(const Checkpoint& ckpt) {
  const auto& s = ckpt.state;
  try {
    if (s.at("round").get<std::size_t>() != round_) {
      throw ConfigError("checkpoint belongs to round " + s.at("round").dump() + ", not " + std::to_string(round_));
    }
    restore(ckpt, net_, &opt_);
    next_epoch_ = s.at("next_epoch").get<std::size_t>();
    step_ = s.at("step").get<std::size_t>();
    best_val_.reset();
    if (!s.at("best_val_loss").is_null()) {
      best_val_ = s.at("best_val_loss").get<double>();
    }
    stale_epochs_ = s.at("stale_epochs").get<std::size_t>();
    history = s.value("completed_rounds", nlohmann::json::array());
    progress_ = RoundResult{};
    progress_.round = round_;
    progress_.steps = step_;
    progress_.best_val_loss = best_val_;
    const auto& p = s.at("progress");
    progress_.last_train = loss_from_json(p.at("train"));
    if (!p.at("val").is_null()) {
      progress_.last_val = val_from_json(p.at("val"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint state: ") + e.what());
  }
}

RoundResult RoundTrainer::run(std::ostream& log, const std::filesystem::path& checkpoint_dir) {
  RoundResult& result = progress_;
  result.round = round_;
  if (!checkpoint_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(checkpoint_dir, ec);
    if (ec) {
      throw DataError("cannot create " + checkpoint_dir.string() + ": " + ec.message());
    }
  }
  const std::size_t start = next_epoch_;
  for (std::size_t epoch = start; epoch < cfg_.epochs; ++epoch) {
    const auto order = epoch_order(train_, cfg_.seed, round_, epoch);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg_.batch_size) {
      const auto batch = std::span(order).subspan(begin, std::min(cfg_.batch_size, order.size() - begin));
      result.last_train = step(batch, epoch);
      nlohmann::ordered_json entry = {{"type", "step"}, {"round", round_}, {"epoch", epoch}, {"step", step_},
                                      {"batch_size", batch.size()}};
      entry.update(loss_json(result.last_train));
      log << entry.dump() << '\n';
    }
    next_epoch_ = epoch + 1;
    result.steps = step_;

    bool stop = false;
    if (!val_.empty()) {
      const ValidationResult v = validate(net_, data_, val_, cfg_);
      result.last_val = v;
      nlohmann::ordered_json entry = {{"type", "val"}, {"round", round_}, {"epoch", epoch}, {"step", step_}};
      entry.update(val_json(v));
      log << entry.dump() << '\n';
      if (!best_val_ || v.loss.total < *best_val_) {
        best_val_ = v.loss.total;
        stale_epochs_ = 0;
      } else {
        ++stale_epochs_;
      }
      result.best_val_loss = best_val_;
      stop = cfg_.early_stop && stale_epochs_ >= *cfg_.early_stop;
    }
    if (!checkpoint_dir.empty() && cfg_.checkpoint_every > 0 && (epoch + 1) % cfg_.checkpoint_every == 0) {
      write_checkpoint(checkpoint_path(checkpoint_dir, round_, epoch), snapshot());
    }
    if (stop) {
      log << nlohmann::ordered_json{{"type", "early_stop"}, {"round", round_}, {"epoch", epoch}}.dump() << '\n';
      break;
    }
  }
  log.flush();
  result.steps = step_;
  result.best_val_loss = best_val_;
  if (!checkpoint_dir.empty()) {
    write_checkpoint(checkpoint_path(checkpoint_dir, round_, std::nullopt), snapshot());
  }
  return result;
}

nlohmann::ordered_json round_summary(const RoundResult& r) {
  nlohmann::ordered_json j = {{"type", "round_summary"}, {"round", r.round}, {"steps", r.steps}};
  j["train"] = loss_json(r.last_train);
  j["val"] = r.last_val ? val_json(*r.last_val) : nlohmann::ordered_json(nullptr);
  j["best_val_L"] = r.best_val_loss ? nlohmann::ordered_json(*r.best_val_loss) : nlohmann::ordered_json(nullptr);
  return j;
}

namespace {

nlohmann::ordered_json mean_std(const std::vector<double>& xs) {
  double mean = 0.0;
  for (const double x : xs) {
    mean += x;
  }
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (const double x : xs) {
    var += (x - mean) * (x - mean);
  }
  return {{"mean", mean}, {"std", std::sqrt(var / static_cast<double>(xs.size()))}};
}

// Mean and population std of every validation metric across round summaries.
nlohmann::ordered_json summarize(const nlohmann::json& rounds) {
  nlohmann::ordered_json j = {{"type", "summary"}, {"rounds", rounds.size()}};
  std::vector<nlohmann::json> with_val;
  for (const auto& r : rounds) {
    if (!r.at("val").is_null()) {
      with_val.push_back(r.at("val"));
    }
  }
  if (with_val.empty()) {
    j["val"] = nullptr;
    return j;
  }
  auto collect = [&](auto get) {
    std::vector<double> xs;
    for (const auto& v : with_val) {
      xs.push_back(get(v));
    }
    return mean_std(xs);
  };
  nlohmann::ordered_json val;
  for (const char* key : {"L", "l_i", "l_m", "l_t", "l_n"}) {
    val[key] = collect([key](const nlohmann::json& v) { return v.at(key).get<double>(); });
  }
  nlohmann::ordered_json acc;
  for (const auto name : kLabelNames) {
    const std::string label(name);
    acc[label] = collect([&label](const nlohmann::json& v) { return v.at("accuracy").at(label).get<double>(); });
  }
  val["accuracy"] = std::move(acc);
  val["subset_accuracy"] = collect([](const nlohmann::json& v) { return v.at("subset_accuracy").get<double>(); });
  j["val"] = std::move(val);
  return j;
}

}  // namespace

std::vector<RoundResult> train(const TrainConfig& cfg, const Dataset& data, std::ostream& log,
                               const std::filesystem::path& checkpoint_dir, const Checkpoint* resume_from) {
  cfg.validate();
  nlohmann::json history = nlohmann::json::array();
  std::size_t first = 0;
  if (resume_from != nullptr) {
    const auto round = resume_from->state.at("round").get<std::size_t>();
    const auto it = std::find(cfg.rounds.begin(), cfg.rounds.end(), round);
    if (it == cfg.rounds.end()) {
      throw ConfigError("checkpoint round " + std::to_string(round) + " is not among the configured rounds");
    }
    first = static_cast<std::size_t>(it - cfg.rounds.begin());
  }
  std::vector<RoundResult> results;
  for (std::size_t k = first; k < cfg.rounds.size(); ++k) {
    RoundTrainer trainer(cfg, data, cfg.rounds[k]);
    if (resume_from != nullptr && k == first) {
      trainer.resume(*resume_from);
      history = trainer.history;
    }
    trainer.history = history;
    results.push_back(trainer.run(log, checkpoint_dir));
    const auto summary = round_summary(results.back());
    log << summary.dump() << '\n';
    history.push_back(nlohmann::json::parse(summary.dump()));
  }
  log << summarize(history).dump() << '\n';
  log.flush();
  return results;
}

}  // namespace ldcsf::train
