// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "posvit/encoder.hpp"

namespace posvit {

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// First and second moments per parameter, in parameter-list order.
struct AdamWState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamWState make_adamw_state(const ParameterList& params);

/// One AdamW update of a single tensor at (1-based) step `step`:
///
///   p <- p * (1 - lr wd)                    (when `decay`)
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
///
/// Throws NumericError on a non-finite gradient.
void adamw_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, std::size_t step, const AdamWHyper& hyper, bool decay);

/// Applies `adamw_update` to every parameter using its accumulated gradient
/// (zero when absent), then advances `state.step`. Weight decay only touches
/// parameters flagged `decay`.
void adamw_step(ParameterList& params, AdamWState& state, const AdamWHyper& hyper);

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then cosine decay
/// towards 0 at `total_steps`.
double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double base_lr);

/// Global L2 norm of all gradients.
double grad_norm(const ParameterList& params);

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterList& params, double max_norm);

void zero_grads(ParameterList& params);

}  // namespace posvit
