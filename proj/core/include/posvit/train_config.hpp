// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

namespace posvit {

/// Table-3 style augmentations: random resized crop, random horizontal flip,
/// random vertical flip.
struct Augmentations {
  bool crop = false;
  bool hflip = false;
  bool vflip = false;

  bool any() const { return crop || hflip || vflip; }
  bool operator==(const Augmentations&) const = default;
};

/// Optimization and schedule settings. Defaults are the desk-scale preset;
/// the architecture (including head mode and positional encoding) lives in
/// ModelConfig.
struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t warmup_epochs = 2;
  double base_lr = 1e-3;
  double weight_decay = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double lambda = 0.5;
  Augmentations augment;
  double mask_ratio = 0.75;  // pretraining only
  double grad_clip = 5.0;    // global norm; 0 disables clipping
  std::size_t pair_budget = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool norm_pix_loss = false;
  bool log_wall_time = false;  // otherwise the seconds column is 0 and output is reproducible
  bool extended_csv = false;   // adds validation columns

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

}  // namespace posvit
