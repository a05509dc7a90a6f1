// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "posvit/encoder.hpp"
#include "posvit/model_config.hpp"
#include "posvit/optim.hpp"

namespace posvit {

inline constexpr int kCheckpointFormatVersion = 1;

/// Canonical JSON text of a model configuration (sorted keys).
std::string model_config_json(const ModelConfig& config);
/// Hex FNV-1a hash of `model_config_json`.
std::string config_hash(const ModelConfig& config);

struct CheckpointInfo {
  ModelConfig config;
  std::size_t epoch = 0;
  bool has_optimizer = false;
};

/// Writes `dir/manifest.json` and `dir/weights.bin`. The payload holds every
/// parameter (then the AdamW moments, when given) as little-endian float64,
/// row-major, concatenated in manifest order.
void save_checkpoint(const std::filesystem::path& dir, const ParameterList& params,
                     const ModelConfig& config, std::size_t epoch,
                     const AdamWState* optimizer = nullptr);

/// Reads a checkpoint into `params` (matched by name) and, when requested,
/// the optimizer state. Throws FormatError on a version, shape or size
/// mismatch, and ConfigError listing the differing fields when the stored
/// configuration hash differs from `config`'s, unless `force` is set.
CheckpointInfo load_checkpoint(const std::filesystem::path& dir, ParameterList& params,
                               const ModelConfig& config, AdamWState* optimizer = nullptr,
                               bool force = false);

/// Reads only the manifest's model configuration and epoch.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

}  // namespace posvit
