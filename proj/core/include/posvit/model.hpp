// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "posvit/encoder.hpp"
#include "posvit/position_labels.hpp"

namespace posvit {

/// Encoder + classifier with the positional-label heads selected by
/// `config.head_mode`.
struct Model {
  ModelConfig config;
  EncoderParams encoder;
  std::optional<PositionHead> absolute_head;
  std::optional<PositionHead> relative_head;

  ParameterList parameters() const;
};

/// Each component draws from its own named stream of `seed`, so the encoder
/// initialization does not depend on which heads are attached.
Model init_model(const ModelConfig& config, std::uint64_t seed);

struct ForwardOptions {
  double lambda = 0.5;
  std::size_t pair_budget = 0;
  Rng* pair_rng = nullptr;
};

struct ForwardResult {
  Tensor logits;          // [batch x num_classes]
  Tensor classification;  // L_s
  Tensor position;        // L_p (sum over attached heads); undefined without heads
  Tensor joint;           // L_s + lambda L_p
  std::size_t position_correct = 0;
  std::size_t position_total = 0;
};

/// Supervised forward pass over `batch` images given as patches
/// [batch*N x m^2 C].
ForwardResult model_forward(const Model& model, const Tensor& patches, std::size_t batch,
                            std::span<const std::size_t> labels, const ForwardOptions& options);

}  // namespace posvit
