// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "config_json.hpp"
#include "posvit/errors.hpp"
#include "posvit/rng.hpp"

namespace posvit {

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kWeights = "weights.bin";

nlohmann::json model_json(const ModelConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  detail::model_to_json(config, j);
  return j;
}

void put_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xFF));
    bits >>= 8;
  }
}

double get_le(const std::string& in, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) {
    bits = (bits << 8) | static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)]);
  }
  return std::bit_cast<double>(bits);
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Entry {
  Shape shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

struct Manifest {
  CheckpointInfo info;
  std::string hash;
  std::optional<std::size_t> optimizer_step;
  std::map<std::string, Entry> tensors;
  std::size_t payload_bytes = 0;
};

Manifest read_manifest(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_all(dir / kManifest));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / kManifest).string() + ": " + e.what());
  }
  Manifest m;
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw FormatError("checkpoint format version " + std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointFormatVersion));
    }
    m.hash = j.at("config_hash").get<std::string>();
    detail::JsonReader reader(j.at("model_config"));
    detail::read_model(reader, m.info.config);
    reader.finish();
    m.info.epoch = j.at("epoch").get<std::size_t>();
    if (j.contains("optimizer_step") && !j["optimizer_step"].is_null()) {
      m.optimizer_step = j["optimizer_step"].get<std::size_t>();
    }
    m.info.has_optimizer = m.optimizer_step.has_value();
    for (const auto& t : j.at("tensors")) {
      Entry e;
      e.shape = t.at("shape").get<Shape>();
      e.offset = t.at("offset").get<std::size_t>();
      e.count = t.at("count").get<std::size_t>();
      const auto name = t.at("name").get<std::string>();
      if (e.count != shape_numel(e.shape)) {
        throw FormatError("tensor '" + name + "' has count " + std::to_string(e.count) +
                          " but shape " + shape_string(e.shape));
      }
      if (e.offset != m.payload_bytes) {
        throw FormatError("tensor '" + name + "' has offset " + std::to_string(e.offset) +
                          ", expected " + std::to_string(m.payload_bytes));
      }
      m.payload_bytes += e.count * 8;
      if (!m.tensors.emplace(name, std::move(e)).second) {
        throw FormatError("tensor '" + name + "' appears twice in the manifest");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / kManifest).string() + ": " + e.what());
  }
  return m;
}

void copy_out(const std::string& payload, const Entry& e, std::span<double> dst) {
  for (std::size_t i = 0; i < e.count; ++i) dst[i] = get_le(payload, e.offset + 8 * i);
}

const Entry& require(const Manifest& m, const std::string& name, const Shape& shape) {
  const auto it = m.tensors.find(name);
  if (it == m.tensors.end()) throw FormatError("checkpoint has no tensor '" + name + "'");
  if (it->second.shape != shape) {
    throw FormatError("tensor '" + name + "' has shape " + shape_string(it->second.shape) +
                      " in the checkpoint but " + shape_string(shape) + " in the model");
  }
  return it->second;
}

}  // namespace

std::string model_config_json(const ModelConfig& config) { return model_json(config).dump(); }

std::string config_hash(const ModelConfig& config) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(model_config_json(config));
  return s.str();
}

void save_checkpoint(const std::filesystem::path& dir, const ParameterList& params,
                     const ModelConfig& config, std::size_t epoch, const AdamWState* optimizer) {
  std::filesystem::create_directories(dir);
  nlohmann::json j = nlohmann::json::object();
  j["format_version"] = kCheckpointFormatVersion;
  j["config_hash"] = config_hash(config);
  j["model_config"] = model_json(config);
  j["epoch"] = epoch;
  j["optimizer_step"] = optimizer ? nlohmann::json(optimizer->step) : nlohmann::json(nullptr);
  nlohmann::json tensors = nlohmann::json::array();
  std::string payload;
  auto append = [&](const std::string& name, const Shape& shape, std::span<const double> values) {
    tensors.push_back({{"name", name}, {"shape", shape}, {"offset", payload.size()}, {"count", values.size()}});
    for (double v : values) put_le(payload, v);
  };
  for (const NamedParameter& p : params) append(p.name, p.tensor.shape(), p.tensor.data());
  if (optimizer) {
    if (optimizer->m.size() != params.size() || optimizer->v.size() != params.size()) {
      throw DimensionError("save_checkpoint: optimizer state does not match the parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      append("adamw.m/" + params[i].name, params[i].tensor.shape(), optimizer->m[i]);
      append("adamw.v/" + params[i].name, params[i].tensor.shape(), optimizer->v[i]);
    }
  }
  j["tensors"] = std::move(tensors);

  std::ofstream weights(dir / kWeights, std::ios::binary);
  weights.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  std::ofstream manifest(dir / kManifest, std::ios::binary);
  manifest << j.dump(2) << '\n';
  if (!weights || !manifest) throw FormatError("failed to write checkpoint to " + dir.string());
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir) { return read_manifest(dir).info; }

CheckpointInfo load_checkpoint(const std::filesystem::path& dir, ParameterList& params,
                               const ModelConfig& config, AdamWState* optimizer, bool force) {
  const Manifest m = read_manifest(dir);
  if (m.hash != config_hash(m.info.config)) {
    throw FormatError("manifest config_hash " + m.hash + " does not match its model_config");
  }
  const std::string expected = config_hash(config);
  if (m.hash != expected && !force) {
    const nlohmann::json stored = model_json(m.info.config), wanted = model_json(config);
    std::string diff;
    for (const auto& item : wanted.items()) {
      if (stored.at(item.key()) != item.value()) {
        diff += " " + item.key() + ": " + stored.at(item.key()).dump() + " -> " + item.value().dump() + ";";
      }
    }
    throw ConfigError("checkpoint config hash " + m.hash + " differs from " + expected + " (" +
                      diff.substr(diff.empty() ? 0 : 1) + ")");
  }
  const std::string payload = read_all(dir / kWeights);
  if (payload.size() != m.payload_bytes) {
    throw FormatError((dir / kWeights).string() + ": expected " + std::to_string(m.payload_bytes) +
                      " bytes, found " + std::to_string(payload.size()));
  }
  for (const auto& [name, entry] : m.tensors) {
    if (name.starts_with("adamw.")) continue;
    const bool known = std::any_of(params.begin(), params.end(),
                                   [&](const NamedParameter& p) { return p.name == name; });
    if (!known) throw FormatError("checkpoint tensor '" + name + "' has no matching parameter");
  }
  // Validate everything before mutating any parameter.
  std::vector<const Entry*> entries;
  for (const NamedParameter& p : params) entries.push_back(&require(m, p.name, p.tensor.shape()));
  AdamWState state;
  if (optimizer) {
    if (!m.optimizer_step) throw FormatError("checkpoint holds no optimizer state");
    state.step = *m.optimizer_step;
    for (const NamedParameter& p : params) {
      const Entry& em = require(m, "adamw.m/" + p.name, p.tensor.shape());
      const Entry& ev = require(m, "adamw.v/" + p.name, p.tensor.shape());
      state.m.emplace_back(em.count);
      state.v.emplace_back(ev.count);
      copy_out(payload, em, state.m.back());
      copy_out(payload, ev, state.v.back());
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) copy_out(payload, *entries[i], params[i].tensor.mutable_data());
  if (optimizer) *optimizer = std::move(state);
  return m.info;
}

}  // namespace posvit
