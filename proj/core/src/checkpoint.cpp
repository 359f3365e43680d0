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

#include "ldcsf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace ldcsf {
namespace {

constexpr char kMagic[8] = {'L', 'D', 'C', 'S', 'F', 'C', 'K', 'P'};
const std::string kVelocityPrefix = "optimizer.velocity.";

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
}

template <class U>
U get_le(const std::string& in, std::size_t at) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

NamedTensor snapshot(const std::string& name, const Tensor<float>& t) {
  return {name, t.shape(), std::vector<float>(t.data().begin(), t.data().end())};
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) {
      return &t;
    }
  }
  return nullptr;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    if (numel_of(t.shape) != t.data.size()) {
      throw ShapeError("checkpoint: tensor '" + t.name + "' has " + std::to_string(t.data.size()) +
                       " values for shape " + shape_str(t.shape));
    }
    manifest.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}, {"count", t.data.size()}});
    offset += t.data.size();
  }
  nlohmann::ordered_json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = ckpt.config;
  header["state"] = ckpt.state;
  header["tensors"] = std::move(manifest);
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset * 4);
  for (const auto& t : ckpt.tensors) {
    for (const float v : t.data) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  constexpr std::size_t kPrefix = sizeof(kMagic) + 4 + 8;
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic, not a checkpoint file");
  }
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(bytes, 12);
  if (header_len > bytes.size() - kPrefix) {
    throw DataError("checkpoint: truncated header");
  }
  Checkpoint ckpt;
  std::size_t payload = 0;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(kPrefix, header_len));
    ckpt.config = header.at("config");
    ckpt.state = header.at("state");
    const std::size_t base = kPrefix + header_len;
    payload = bytes.size() - base;
    std::uint64_t expected = 0;
    for (const auto& entry : header.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (offset != expected || count != numel_of(t.shape) || (offset + count) * 4 > payload) {
        throw DataError("checkpoint: inconsistent manifest entry '" + t.name + "'");
      }
      t.data.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        t.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, base + (offset + i) * 4));
      }
      expected = offset + count;
      ckpt.tensors.push_back(std::move(t));
    }
    if (expected * 4 != payload) {
      throw DataError("checkpoint: payload size does not match manifest");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  }
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("checkpoint: cannot open " + path.string() + " for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw DataError("checkpoint: write failed for " + path.string());
  }
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("checkpoint: cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

Checkpoint capture(model::LdcsfModel<float>& net, const Sgd<float>* opt, nlohmann::json state) {
  Checkpoint ckpt;
  ckpt.config = net.config().to_json();
  ckpt.state = std::move(state);
  const auto params = net.parameters();
  for (const auto* p : params) {
    ckpt.tensors.push_back(snapshot(p->name, p->value));
  }
  for (const auto& [name, buffer] : net.buffers()) {
    ckpt.tensors.push_back(snapshot(name, *buffer));
  }
  if (opt != nullptr && !opt->velocities().empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      ckpt.tensors.push_back(snapshot(kVelocityPrefix + params[i]->name, opt->velocities()[i]));
    }
  }
  return ckpt;
}

void restore(const Checkpoint& ckpt, model::LdcsfModel<float>& net, Sgd<float>* opt) {
  const auto saved = model::ModelConfig::from_json(ckpt.config);
  const auto diff = saved.structural_diff(net.config());
  if (!diff.empty()) {
    std::string fields;
    for (const auto& f : diff) {
      fields += (fields.empty() ? "" : ", ") + f;
    }
    throw ConfigError("checkpoint config mismatch in: " + fields);
  }

  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : ckpt.tensors) {
    if (!by_name.emplace(t.name, &t).second) {
      throw DataError("checkpoint: duplicate tensor '" + t.name + "'");
    }
  }
  std::vector<std::pair<Tensor<float>*, const NamedTensor*>> plan;
  auto expect = [&](const std::string& name, Tensor<float>* target, const Shape& shape) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw DataError("checkpoint: missing tensor '" + name + "'");
    }
    if (it->second->shape != shape) {
      throw ShapeError("checkpoint: tensor '" + name + "' has shape " + shape_str(it->second->shape) +
                       ", model expects " + shape_str(shape));
    }
    plan.emplace_back(target, it->second);
    by_name.erase(it);
  };

  const auto params = net.parameters();
  for (auto* p : params) {
    expect(p->name, &p->value, p->value.shape());
  }
  for (const auto& [name, buffer] : net.buffers()) {
    expect(name, buffer, buffer->shape());
  }
  std::vector<Tensor<float>> velocities;
  const bool has_velocity = by_name.contains(kVelocityPrefix + params.front()->name);
  if (has_velocity) {
    velocities.reserve(params.size());
    for (auto* p : params) {
      velocities.emplace_back(p->value.shape());
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      expect(kVelocityPrefix + params[i]->name, &velocities[i], params[i]->value.shape());
    }
  }
  if (!by_name.empty()) {
    throw DataError("checkpoint: unexpected tensor '" + by_name.begin()->first + "'");
  }

  for (auto& [target, source] : plan) {
    *target = Tensor<float>(source->shape, source->data);
  }
  if (opt != nullptr) {
    opt->velocities() = std::move(velocities);
  }
}

}  // namespace ldcsf
