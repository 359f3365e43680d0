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

#ifndef LDCSF_CHECKPOINT_HPP
#define LDCSF_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldcsf/model.hpp"
#include "ldcsf/optim.hpp"

// Checkpoint container:
//   "LDCSFCKP" | u32 version | u64 header bytes | JSON header | f32 payload
// All integers and floats little-endian. The header carries the model config,
// free-form training state and an ordered tensor manifest with element offsets
// into the payload.
namespace ldcsf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  nlohmann::json config;  // ModelConfig::to_json()
  nlohmann::json state = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws DataError on a malformed or truncated file.
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Byte image of a checkpoint, as write_checkpoint would store it.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

// Velocity tensors are stored as "optimizer.velocity.<param name>".
Checkpoint capture(model::LdcsfModel<float>& net, const Sgd<float>* opt, nlohmann::json state = nlohmann::json::object());

// Validates everything (config structure, names, shapes) before writing a
// single value. A structural config difference raises ConfigError naming the
// differing fields.
void restore(const Checkpoint& ckpt, model::LdcsfModel<float>& net, Sgd<float>* opt = nullptr);

}  // namespace ldcsf

#endif  // LDCSF_CHECKPOINT_HPP
