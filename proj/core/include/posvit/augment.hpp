// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "posvit/rng.hpp"
#include "posvit/tensor.hpp"
#include "posvit/train_config.hpp"

namespace posvit {

/// Geometry of an interleaved [H x W x C] image buffer.
struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t numel() const { return height * width * channels; }
};

/// Mirrors the columns of an image.
std::vector<double> hflip_image(std::span<const double> image, const ImageShape& shape);
/// Mirrors the rows of an image.
std::vector<double> vflip_image(std::span<const double> image, const ImageShape& shape);

/// Crops a window covering `area_fraction` of the image at the image's aspect
/// ratio, with its top-left corner at fractions (`top`, `left`) of the free
/// margin, and resizes it back with bilinear interpolation.
std::vector<double> resized_crop(std::span<const double> image, const ImageShape& shape,
                                 double area_fraction, double top, double left);

/// Random crop (area in [0.6, 1]), then horizontal and vertical flips, each
/// with probability 0.5. Only enabled augmentations draw from `rng`. Labels
/// are never touched.
std::vector<double> augment(std::span<const double> image, const ImageShape& shape,
                            const Augmentations& flags, Rng& rng);

/// Tensor form for an [H x W x C] image.
Tensor augment(const Tensor& image, const Augmentations& flags, Rng& rng);

}  // namespace posvit
