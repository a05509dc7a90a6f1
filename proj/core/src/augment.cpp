// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/augment.hpp"

#include <algorithm>
#include <cmath>

#include "posvit/errors.hpp"

namespace posvit {

namespace {

constexpr double kMinCropArea = 0.6;
constexpr double kMaxCropArea = 1.0;

void check(std::span<const double> image, const ImageShape& shape) {
  if (image.size() != shape.numel() || shape.numel() == 0) {
    throw DimensionError("image buffer holds " + std::to_string(image.size()) +
                         " values, expected " + std::to_string(shape.height) + "x" +
                         std::to_string(shape.width) + "x" + std::to_string(shape.channels));
  }
}

}  // namespace

std::vector<double> hflip_image(std::span<const double> image, const ImageShape& shape) {
  check(image, shape);
  const std::size_t w = shape.width, c = shape.channels;
  std::vector<double> out(image.size());
  for (std::size_t r = 0; r < shape.height; ++r) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        out[(r * w + x) * c + k] = image[(r * w + (w - 1 - x)) * c + k];
      }
    }
  }
  return out;
}

std::vector<double> vflip_image(std::span<const double> image, const ImageShape& shape) {
  check(image, shape);
  const std::size_t row = shape.width * shape.channels;
  std::vector<double> out(image.size());
  for (std::size_t r = 0; r < shape.height; ++r) {
    std::copy_n(image.begin() + static_cast<long>((shape.height - 1 - r) * row), row,
                out.begin() + static_cast<long>(r * row));
  }
  return out;
}

std::vector<double> resized_crop(std::span<const double> image, const ImageShape& shape,
                                 double area_fraction, double top, double left) {
  check(image, shape);
  if (!(area_fraction > 0.0 && area_fraction <= 1.0)) {
    throw ConfigError("crop area fraction must lie in (0, 1]");
  }
  const double side = std::sqrt(area_fraction);
  const double ch = side * static_cast<double>(shape.height);
  const double cw = side * static_cast<double>(shape.width);
  const double y0 = std::clamp(top, 0.0, 1.0) * (static_cast<double>(shape.height) - ch);
  const double x0 = std::clamp(left, 0.0, 1.0) * (static_cast<double>(shape.width) - cw);
  const std::size_t c = shape.channels;
  const long hmax = static_cast<long>(shape.height) - 1;
  const long wmax = static_cast<long>(shape.width) - 1;
  std::vector<double> out(image.size());
  for (std::size_t r = 0; r < shape.height; ++r) {
    // Pixel centers of the output grid mapped into the crop window.
    const double sy = std::clamp(y0 + (static_cast<double>(r) + 0.5) * ch / static_cast<double>(shape.height) - 0.5,
                                 0.0, static_cast<double>(hmax));
    const long ya = static_cast<long>(std::floor(sy));
    const long yb = std::min(ya + 1, hmax);
    const double fy = sy - static_cast<double>(ya);
    for (std::size_t x = 0; x < shape.width; ++x) {
      const double sx = std::clamp(x0 + (static_cast<double>(x) + 0.5) * cw / static_cast<double>(shape.width) - 0.5,
                                   0.0, static_cast<double>(wmax));
      const long xa = static_cast<long>(std::floor(sx));
      const long xb = std::min(xa + 1, wmax);
      const double fx = sx - static_cast<double>(xa);
      for (std::size_t k = 0; k < c; ++k) {
        auto px = [&](long yy, long xx) {
          return image[(static_cast<std::size_t>(yy) * shape.width + static_cast<std::size_t>(xx)) * c + k];
        };
        const double top_row = (1.0 - fx) * px(ya, xa) + fx * px(ya, xb);
        const double bottom_row = (1.0 - fx) * px(yb, xa) + fx * px(yb, xb);
        out[(r * shape.width + x) * c + k] = (1.0 - fy) * top_row + fy * bottom_row;
      }
    }
  }
  return out;
}

std::vector<double> augment(std::span<const double> image, const ImageShape& shape,
                            const Augmentations& flags, Rng& rng) {
  check(image, shape);
  std::vector<double> out(image.begin(), image.end());
  if (flags.crop) {
    const double area = rng.uniform(kMinCropArea, kMaxCropArea);
    const double top = rng.uniform();
    const double left = rng.uniform();
    out = resized_crop(out, shape, area, top, left);
  }
  if (flags.hflip && rng.bernoulli(0.5)) out = hflip_image(out, shape);
  if (flags.vflip && rng.bernoulli(0.5)) out = vflip_image(out, shape);
  return out;
}

Tensor augment(const Tensor& image, const Augmentations& flags, Rng& rng) {
  if (image.dim() != 3) {
    throw DimensionError("augment expects an [H x W x C] image, got " + shape_string(image.shape()));
  }
  const ImageShape shape{image.extent(0), image.extent(1), image.extent(2)};
  return Tensor::from_data(image.shape(), augment(image.data(), shape, flags, rng));
}

}  // namespace posvit
