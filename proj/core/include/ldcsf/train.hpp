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

#ifndef LDCSF_TRAIN_HPP
#define LDCSF_TRAIN_HPP

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldcsf/checkpoint.hpp"
#include "ldcsf/data.hpp"
#include "ldcsf/eval.hpp"
#include "ldcsf/model.hpp"
#include "ldcsf/optim.hpp"

namespace ldcsf::train {

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 24;
  SgdConfig sgd;
  std::uint64_t seed = 0;
  std::vector<std::size_t> rounds{0};
  model::ModelConfig model;
  std::size_t checkpoint_every = 0;          // epochs; 0 writes only the final checkpoint
  std::optional<std::size_t> early_stop;     // patience in epochs on validation L
  std::size_t workers = 1;                   // batch assembly / eval threads
  bool augment = true;
  data::AugmentConfig augmentation;
  double threshold = 0.5;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  // Missing keys keep defaults; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Tiles decoded and resized to the model input once, indexed like the
/// manifest records.
struct Dataset {
  std::vector<data::TileRecord> records;
  std::vector<RgbImage> images;

  std::vector<std::size_t> indices(std::size_t round, data::Split split) const;
};

// Paths are resolved against the manifest's directory.
Dataset load_dataset(const std::filesystem::path& manifest, std::size_t img_size, std::size_t workers = 1);

struct Batch {
  Tensor<float> images;   // [B,3,S,S]
  Tensor<float> targets;  // [B,4]
};

// Augmentation, when enabled, draws from a stream keyed by
// (seed, round, epoch, record index) so results ignore thread scheduling.
Batch make_batch(const Dataset& data, std::span<const std::size_t> indices, const TrainConfig& cfg, std::size_t round,
                 std::size_t epoch, bool augment);

// Epoch order of `train` indices, seeded by (seed, round, epoch).
std::vector<std::size_t> epoch_order(std::span<const std::size_t> train, std::uint64_t seed, std::size_t round,
                                     std::size_t epoch);

struct ValidationResult {
  model::MultiLabelLoss loss;  // sample-weighted means over the split
  std::array<double, kNumLabels> accuracy{};
  double subset_accuracy = 0.0;
};

// Eval-mode sigmoid scores, sharded over `workers` threads.
std::vector<eval::Scores> predict(model::LdcsfModel<float>& net, const Dataset& data,
                                  std::span<const std::size_t> indices, std::size_t batch_size, std::size_t workers);

ValidationResult validate(model::LdcsfModel<float>& net, const Dataset& data, std::span<const std::size_t> indices,
                          const TrainConfig& cfg);

struct RoundResult {
  std::size_t round = 0;
  std::size_t steps = 0;
  std::optional<ValidationResult> last_val;
  std::optional<double> best_val_loss;
  model::MultiLabelLoss last_train;
};

/// One split round: model init, per-epoch shuffle, augmentation, SGD,
/// validation, checkpoints. Every log entry is one JSON line.
class RoundTrainer {
 public:
  RoundTrainer(const TrainConfig& cfg, const Dataset& data, std::size_t round);

  // Loads weights, optimizer velocities, BN buffers and progress counters.
  // Training continues with the epoch after the saved one.
  void resume(const Checkpoint& ckpt);

  // Runs the remaining epochs. `checkpoint_dir` may be empty.
  RoundResult run(std::ostream& log, const std::filesystem::path& checkpoint_dir);

  // One SGD step on the given records; throws NumericError naming the step.
  model::MultiLabelLoss step(std::span<const std::size_t> batch, std::size_t epoch);

  Checkpoint snapshot();
  model::LdcsfModel<float>& net() { return net_; }
  std::size_t steps() const { return step_; }

  // Summaries of rounds finished earlier in the same run; carried inside
  // checkpoints so a resumed run reports the same cross-round summary.
  nlohmann::json history = nlohmann::json::array();

 private:
  TrainConfig cfg_;
  const Dataset& data_;
  std::size_t round_;
  model::LdcsfModel<float> net_;
  Sgd<float> opt_;
  std::vector<std::size_t> train_;
  std::vector<std::size_t> val_;
  std::size_t next_epoch_ = 0;
  std::size_t step_ = 0;
  std::optional<double> best_val_;
  std::size_t stale_epochs_ = 0;
  RoundResult progress_;
};

nlohmann::ordered_json round_summary(const RoundResult& r);

// Model init seed for a round.
std::uint64_t round_seed(std::uint64_t seed, std::size_t round);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t round, std::optional<std::size_t> epoch);

// Trains every configured round and appends a summary averaged over rounds.
std::vector<RoundResult> train(const TrainConfig& cfg, const Dataset& data, std::ostream& log,
                               const std::filesystem::path& checkpoint_dir, const Checkpoint* resume_from = nullptr);

}  // namespace ldcsf::train

#endif  // LDCSF_TRAIN_HPP
