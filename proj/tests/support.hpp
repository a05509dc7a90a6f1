// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "posvit/model_config.hpp"
#include "posvit/rng.hpp"
#include "posvit/tensor.hpp"

namespace posvit::testing {

/// 8x8 grayscale images cut into 4x4 patches: a 2x2 grid.
inline ModelConfig tiny_config(HeadMode head = HeadMode::apl, bool use_pe = false) {
  ModelConfig c;
  c.image_height = 8;
  c.image_width = 8;
  c.patch = 4;
  c.embed_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.pos_dim = 8;
  c.num_classes = 10;
  c.head_mode = head;
  c.use_pe = use_pe;
  return c;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<double> random_pixels(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(count);
  for (double& x : v) x = rng.uniform();
  return v;
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    m = d > m ? d : (-d > m ? -d : m);
  }
  return m;
}

}  // namespace posvit::testing
