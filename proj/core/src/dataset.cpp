// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>

#include "posvit/errors.hpp"
#include "posvit/rng.hpp"

namespace posvit {

std::span<const double> Dataset::image(std::size_t i) const {
  if (i >= size()) {
    throw IndexError("image " + std::to_string(i) + " outside a dataset of " + std::to_string(size()));
  }
  const std::size_t n = shape.numel();
  return std::span<const double>(pixels).subspan(i * n, n);
}

Dataset make_synthetic(std::size_t count, std::uint64_t seed, const SyntheticSpec& spec) {
  if (count == 0) throw ConfigError("synthetic dataset needs at least one image");
  if (spec.classes == 0 || spec.tile == 0) throw ConfigError("synthetic dataset needs classes and a tile size");
  const std::size_t t2 = spec.tile * spec.tile;
  std::vector<std::vector<double>> textures(spec.classes, std::vector<double>(t2));
  for (std::size_t k = 0; k < spec.classes; ++k) {
    Rng rng = Rng::stream(0, "synthetic.texture", k);
    auto& tex = textures[k];
    for (double& v : tex) v = rng.normal();
    double mu = 0.0;
    for (double v : tex) mu += v;
    mu /= static_cast<double>(t2);
    double peak = 0.0;
    for (double& v : tex) {
      v -= mu;
      peak = std::max(peak, std::abs(v));
    }
    const double s = peak > 0.0 ? spec.texture_amplitude / peak : 0.0;
    for (double& v : tex) v *= s;
  }

  Dataset d;
  d.shape = {spec.height, spec.width, 1};
  d.num_classes = spec.classes;
  d.pixels.resize(count * d.shape.numel());
  d.labels.resize(count);
  Rng noise = Rng::stream(seed, "synthetic.noise");
  double* px = d.pixels.data();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % spec.classes;
    d.labels[i] = label;
    const auto& tex = textures[label];
    for (std::size_t r = 0; r < spec.height; ++r) {
      for (std::size_t c = 0; c < spec.width; ++c) {
        *px++ = spec.row_slope * static_cast<double>(r) + spec.col_slope * static_cast<double>(c) +
                tex[(r % spec.tile) * spec.tile + c % spec.tile] + spec.noise_std * noise.normal();
      }
    }
  }
  return d;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void require_bytes(const std::vector<unsigned char>& b, std::size_t expected,
                   const std::filesystem::path& path) {
  if (b.size() != expected) {
    throw FormatError(path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(b.size()));
  }
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto ib = read_file(images);
  const auto lb = read_file(labels);
  if (ib.size() < 16) require_bytes(ib, 16, images);
  if (lb.size() < 8) require_bytes(lb, 8, labels);
  if (be32(ib, 0) != 0x00000803) {
    throw FormatError(images.string() + ": bad magic, expected 0x00000803 for an image file");
  }
  if (be32(lb, 0) != 0x00000801) {
    throw FormatError(labels.string() + ": bad magic, expected 0x00000801 for a label file");
  }
  const std::size_t count = be32(ib, 4), rows = be32(ib, 8), cols = be32(ib, 12);
  const std::size_t label_count = be32(lb, 4);
  if (count == 0 || rows == 0 || cols == 0) throw FormatError(images.string() + ": empty image file");
  if (count != label_count) {
    throw FormatError("image file holds " + std::to_string(count) + " images but label file holds " +
                      std::to_string(label_count) + " labels");
  }
  require_bytes(ib, 16 + count * rows * cols, images);
  require_bytes(lb, 8 + count, labels);

  Dataset d;
  d.shape = {rows, cols, 1};
  d.pixels.resize(count * rows * cols);
  for (std::size_t i = 0; i < d.pixels.size(); ++i) d.pixels[i] = ib[16 + i] / 255.0;
  d.labels.resize(count);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    d.labels[i] = lb[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.num_classes = max_label + 1;
  return d;
}

namespace {

std::uint64_t parse_u64(std::string_view text, const std::string& spec) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("dataset spec '" + spec + "': '" + std::string(text) + "' is not an integer");
  }
  return v;
}

}  // namespace

Dataset load_dataset(const std::string& spec) {
  const std::string_view s(spec);
  if (s.starts_with("synthetic:")) {
    const std::string_view rest = s.substr(10);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError("dataset spec '" + spec + "' must look like synthetic:<seed>:<count>");
    }
    return make_synthetic(parse_u64(rest.substr(colon + 1), spec), parse_u64(rest.substr(0, colon), spec));
  }
  if (s.starts_with("idx:")) {
    const std::string_view rest = s.substr(4);
    const auto comma = rest.find(',');
    if (comma == std::string_view::npos) {
      throw ConfigError("dataset spec '" + spec + "' must look like idx:<images>,<labels>");
    }
    return load_idx(std::string(rest.substr(0, comma)), std::string(rest.substr(comma + 1)));
  }
  throw ConfigError("unknown dataset spec '" + spec + "'; use synthetic:<seed>:<count> or idx:<images>,<labels>");
}

}  // namespace posvit
