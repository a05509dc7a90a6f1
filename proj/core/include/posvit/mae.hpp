// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "posvit/encoder.hpp"
#include "posvit/model.hpp"
#include "posvit/position_labels.hpp"

namespace posvit {

/// Deterministic split of patch indices into masked and visible sets.
struct MaskPlan {
  std::size_t num_patches = 0;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> masked;   // sorted
  std::vector<std::size_t> visible;  // sorted (raster order)
};

/// Masks round(ratio * n) patches chosen uniformly without replacement.
/// Throws ConfigError unless 0 <= ratio < 1.
MaskPlan sample_mask(std::size_t num_patches, double ratio, std::uint64_t seed);

/// Encoder-output layout for a batch of masked images: each image keeps its
/// class token and visible patches, whose position targets are their original
/// raster indices. All plans must keep the same number of visible patches.
PatchLayout visible_layout(std::span<const MaskPlan> plans);

/// Shallow reconstruction decoder: linear embedding to the decoder width, mask
/// token, learned decoder positions, transformer blocks, layer norm and a
/// linear pixel head.
struct DecoderParams {
  Tensor embed_w, embed_b;  // [D x Dd], [Dd]
  Tensor mask_token;        // [1 x Dd]
  Tensor pos_embed;         // [(N+1) x Dd]
  std::vector<BlockParams> blocks;
  Tensor norm_gamma, norm_beta;
  Tensor pred_w, pred_b;  // [Dd x m^2 C], [m^2 C]

  void append_to(ParameterList& out) const;
};

DecoderParams init_decoder(const ModelConfig& config, Rng& rng);

/// Encoder without positional encoding, decoder and positional-label heads.
struct MaeModel {
  ModelConfig config;
  EncoderParams encoder;
  DecoderParams decoder;
  std::optional<PositionHead> absolute_head;
  std::optional<PositionHead> relative_head;

  ParameterList parameters() const;
};

/// The encoder is always built without positional encoding, whatever
/// `config.use_pe` says; heads follow `config.head_mode`.
MaeModel init_mae(const ModelConfig& config, std::uint64_t seed);

struct MaeOptions {
  double lambda = 0.5;
  bool norm_pix_loss = false;
  std::size_t pair_budget = 0;
  Rng* pair_rng = nullptr;
};

struct MaeOutput {
  Tensor reconstruction;  // decoder pixels for every patch, [batch*N x m^2 C]
  Tensor recon_loss;      // mean squared error over masked pixels; 0 when nothing is masked
  Tensor position_loss;   // undefined without heads
  Tensor total;           // recon + lambda * position
  std::size_t position_correct = 0;
  std::size_t position_total = 0;
};

/// `patches` feed the encoder (visible rows only); `targets` supply the
/// reconstruction targets (masked rows only). Both are [batch*N x m^2 C];
/// `plans` holds one mask per image.
MaeOutput mae_forward(const Tensor& patches, const Tensor& targets,
                      std::span<const MaskPlan> plans, const MaeModel& model,
                      const MaeOptions& options);

inline MaeOutput mae_forward(const Tensor& patches, std::span<const MaskPlan> plans,
                             const MaeModel& model, const MaeOptions& options) {
  return mae_forward(patches, patches, plans, model, options);
}

/// Copies a pretrained encoder and appends a zero positional encoding, so the
/// first forward pass matches the PE-free one. Throws ConfigError if the
/// encoder already has one.
EncoderParams finetune_init(const EncoderParams& pretrained, const ModelConfig& config);

/// Fine-tuning model: `finetune_init` of the MAE encoder, no decoder and no
/// positional heads.
Model finetune_model(const MaeModel& pretrained);

/// Deep copy of parameter values into fresh leaves.
EncoderParams clone_encoder(const EncoderParams& params);

}  // namespace posvit
