// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "posvit/model_config.hpp"
#include "posvit/train_config.hpp"

namespace posvit {

/// Everything a CLI run needs, read from one flat JSON object. Absent keys
/// keep their defaults; unknown keys are rejected.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  std::size_t pretrain_epochs = 5;
  std::size_t pretrain_warmup_epochs = 1;
  std::string dataset = "synthetic:0:1024";
  std::string val_dataset;  // empty: no validation pass
  std::string output_dir = "runs/default";
  std::string recipe = "train";
  std::string checkpoint;  // checkpoint directory to evaluate or resume from
  bool resume = false;
  bool force = false;      // load checkpoints despite a configuration hash mismatch
  std::string pretrained;  // pretraining checkpoint for fine-tuning
  std::size_t repeats = 1; // seeds per grid cell: seed, seed + 1, ...
  std::size_t gradcheck_samples = 1000;
  double gradcheck_h = 1e-5;

  /// Validates the model and training sections.
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Canonical JSON text (sorted keys, two-space indent, trailing newline).
std::string to_json_text(const ExperimentConfig& config);

/// Parses and validates a JSON document. Throws ConfigError on syntax
/// errors, unknown keys, wrongly typed values or invalid settings.
ExperimentConfig parse_experiment(std::string_view json_text);

/// Applies one `key=value` override. The value is read as JSON when it
/// parses (numbers, booleans, quoted strings) and as a bare string
/// otherwise.
void apply_override(ExperimentConfig& config, std::string_view assignment);

/// Reads `path` (or starts from defaults when empty) and applies overrides.
ExperimentConfig load_experiment(const std::filesystem::path& path,
                                 const std::vector<std::string>& overrides = {});

/// Writes `resolved_config.json` into `dir`, creating it as needed.
void write_resolved_config(const ExperimentConfig& config, const std::filesystem::path& dir);

}  // namespace posvit
