// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "posvit/augment.hpp"

namespace posvit {

/// Labelled images stored contiguously as [count x H x W x C] doubles.
struct Dataset {
  ImageShape shape;
  std::size_t num_classes = 0;
  std::vector<double> pixels;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> image(std::size_t i) const;
};

/// Constants of the synthetic position-learnable dataset.
struct SyntheticSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t classes = 10;
  std::size_t tile = 4;          // side of the repeated class texture
  double row_slope = 0.025;      // per pixel row
  double col_slope = 0.003125;   // per pixel column
  double texture_amplitude = 0.1;
  double noise_std = 0.01;
};

/// pixel(r, c) = row_slope r + col_slope c + texture[label](r mod tile, c mod tile) + noise.
/// Textures are zero-mean, peak at `texture_amplitude` and depend only on the
/// class; noise depends on `seed`. Image i has label i mod classes.
Dataset make_synthetic(std::size_t count, std::uint64_t seed, const SyntheticSpec& spec = {});

/// Reads an IDX image file (magic 0x00000803, [count x rows x cols] bytes)
/// and an IDX label file (magic 0x00000801). Pixels are scaled to [0, 1];
/// the class count is one more than the largest label.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// "synthetic:<seed>:<count>" or "idx:<images>,<labels>".
Dataset load_dataset(const std::string& spec);

}  // namespace posvit
