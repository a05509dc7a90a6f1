// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "posvit/encoder.hpp"
#include "posvit/model_config.hpp"
#include "posvit/rng.hpp"
#include "posvit/tensor.hpp"

namespace posvit {

/// Maps a 2D patch offset (dr, dc) to a single class index, Swin style:
///
///   index = (dr + rows - 1) * (2 cols - 1) + (dc + cols - 1)
///
/// over dr in [-(rows-1), rows-1] and dc in [-(cols-1), cols-1], giving
/// (2 rows - 1)(2 cols - 1) classes with (0, 0) at the center.
class RelativeIndexTable {
 public:
  RelativeIndexTable(std::size_t rows, std::size_t cols);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t num_classes() const { return (2 * rows_ - 1) * (2 * cols_ - 1); }

  /// Throws IndexError when the offset lies outside the grid's range.
  std::size_t index(long dr, long dc) const;
  /// Inverse of `index`.
  std::pair<long, long> offset(std::size_t cls) const;

 private:
  std::size_t rows_, cols_;
};

/// relative_index(dr, dc, table) == table.index(dr, dc)
inline std::size_t relative_index(long dr, long dc, const RelativeIndexTable& table) {
  return table.index(dr, dc);
}

/// Raster-order absolute labels 0..rows*cols-1.
std::vector<std::size_t> absolute_targets(std::size_t rows, std::size_t cols);

enum class PositionMode { absolute, relative };

/// Lightweight MLP (Linear D->D, GELU, Linear D->d) feeding a bias-free
/// positional classifier [d x c]. c = N for absolute labels and
/// (2 rows - 1)(2 cols - 1) for relative labels.
struct PositionHead {
  PositionMode mode = PositionMode::absolute;
  std::size_t num_classes = 0;
  Tensor fc1_w, fc1_b;
  Tensor fc2_w, fc2_b;
  Tensor classifier;

  void append_to(ParameterList& out, const std::string& prefix) const;
};

/// Hidden weights truncated-normal(0.02), biases and classifier zero.
PositionHead init_position_head(PositionMode mode, const ModelConfig& config, Rng& rng);

/// features [rows x D] -> logits [rows x c].
Tensor position_logits(const PositionHead& head, const Tensor& features);

/// Where the patch tokens of each image sit in an encoder output and which
/// raster position each one came from. Each image occupies
/// `tokens_per_image` consecutive rows, the first being its class token;
/// `positions[b * (tokens_per_image - 1) + i]` is the raster index of token
/// i + 1 of image b.
struct PatchLayout {
  std::size_t batch = 1;
  std::size_t tokens_per_image = 1;
  std::vector<std::size_t> positions;

  /// All N patches in raster order, for every image.
  static PatchLayout full(std::size_t batch, std::size_t num_patches);
  std::size_t patches_per_image() const { return tokens_per_image - 1; }
  void validate(const Tensor& z) const;
};

struct PositionLoss {
  Tensor loss;
  std::size_t correct = 0;  // top-1 hits of the positional classifier
  std::size_t total = 0;
};

/// Mean cross-entropy of the absolute head over every patch token (class
/// tokens excluded) against its raster index.
PositionLoss absolute_position_loss(const Tensor& z, const PatchLayout& layout,
                                    const PositionHead& head);

/// concat(first half of z_i, first half of z_j) for token rows i, j of a
/// single-image encoder output; 1 <= i, j. Returns [D].
Tensor pair_features(const Tensor& z, std::size_t i, std::size_t j);

/// Mean cross-entropy of the relative head over ordered patch pairs (i, j),
/// including i == j, with target index(r_j - r_i, c_j - c_i). With
/// `pair_budget == 0` every pair is used; otherwise each image contributes
/// min(budget, n^2) distinct pairs drawn uniformly from `rng`.
PositionLoss relative_position_loss(const Tensor& z, const PatchLayout& layout,
                                    const PositionHead& head, const RelativeIndexTable& table,
                                    std::size_t pair_budget = 0, Rng* rng = nullptr);

/// L = L_s + lambda * L_p
Tensor joint_loss(const Tensor& ls, const Tensor& lp, double lambda);

}  // namespace posvit
