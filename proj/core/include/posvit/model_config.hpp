// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace posvit {

/// Which positional-label heads are attached to the encoder.
enum class HeadMode { none, apl, rpl, both };

std::string_view to_string(HeadMode mode);
/// Accepts "none", "apl", "rpl" or "both"; throws ConfigError otherwise.
HeadMode parse_head_mode(std::string_view text);

inline bool has_absolute_head(HeadMode m) { return m == HeadMode::apl || m == HeadMode::both; }
inline bool has_relative_head(HeadMode m) { return m == HeadMode::rpl || m == HeadMode::both; }

/// Architecture hyperparameters. Defaults are the desk-scale configuration:
/// 32x32 grayscale images cut into 4x4 patches (an 8x8 grid, N = 64).
struct ModelConfig {
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t channels = 1;
  std::size_t patch = 4;
  std::size_t embed_dim = 64;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 2;  // hidden width of the block MLP, in units of embed_dim
  std::size_t pos_dim = 64;   // width of the positional feature vector
  std::size_t num_classes = 10;
  bool use_pe = false;
  HeadMode head_mode = HeadMode::apl;
  // MAE decoder. Zero width/heads mean embed_dim / 2 and an automatic head count.
  std::size_t decoder_depth = 1;
  std::size_t decoder_dim = 0;
  std::size_t decoder_heads = 0;
  double ln_eps = 1e-6;

  std::size_t grid_rows() const { return image_height / patch; }
  std::size_t grid_cols() const { return image_width / patch; }
  std::size_t num_patches() const { return grid_rows() * grid_cols(); }
  std::size_t patch_dim() const { return patch * patch * channels; }
  std::size_t mlp_hidden() const { return mlp_ratio * embed_dim; }
  std::size_t decoder_width() const;
  std::size_t decoder_head_count() const;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace posvit
