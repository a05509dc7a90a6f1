// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "posvit/dataset.hpp"
#include "posvit/model_config.hpp"
#include "posvit/rng.hpp"
#include "posvit/tensor.hpp"
#include "posvit/train_config.hpp"

namespace posvit::detail {

/// Seeded permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

/// Patches [batch*N x m^2 C] of the selected images, each augmented in turn.
Tensor batch_patches(const Dataset& data, std::span<const std::size_t> indices,
                     const Augmentations& flags, Rng& rng, const ModelConfig& config);

std::vector<std::size_t> batch_labels(const Dataset& data, std::span<const std::size_t> indices);

std::size_t batch_count(std::size_t n, std::size_t batch_size);

}  // namespace posvit::detail
