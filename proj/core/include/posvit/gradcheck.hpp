// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "posvit/rng.hpp"
#include "posvit/tensor.hpp"

namespace posvit {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Worst coordinate, for diagnostics.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares analytic gradients against central finite differences.
///
/// `loss` must build a fresh graph from the current values of `params` and
/// return a scalar. The analytic gradient is taken from one backward pass;
/// then `sample_count` coordinates are drawn uniformly (with replacement) over
/// all parameter entries and each is perturbed by +-h. The relative error of a
/// coordinate is |a - n| / max(|a|, |n|, 1e-8). Parameter values are restored
/// exactly afterwards and their gradients cleared.
GradCheckReport grad_check(const std::function<Tensor()>& loss,
                           std::span<Tensor> params, double h,
                           std::size_t sample_count, Rng& rng);

}  // namespace posvit
