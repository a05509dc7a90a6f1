// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "posvit/model_config.hpp"
#include "posvit/rng.hpp"
#include "posvit/tensor.hpp"

namespace posvit {

/// A trainable tensor with a stable name. `decay` marks weight matrices that
/// receive decoupled weight decay.
struct NamedParameter {
  std::string name;
  Tensor tensor;
  bool decay = false;
};
using ParameterList = std::vector<NamedParameter>;

/// Pre-norm transformer block: x + MHSA(LN(x)), then x + MLP(LN(x)).
struct BlockParams {
  Tensor ln1_gamma, ln1_beta;
  Tensor qkv_w;
  Tensor q_b, v_b;  // the key bias is fixed at zero
  Tensor proj_w, proj_b;
  Tensor ln2_gamma, ln2_beta;
  Tensor fc1_w, fc1_b;
  Tensor fc2_w, fc2_b;

  void append_to(ParameterList& out, const std::string& prefix) const;
};

BlockParams init_block(std::size_t width, std::size_t hidden, Rng& rng);

/// x: [batch*T x width] -> same shape.
Tensor transformer_block(const Tensor& x, std::size_t batch, const BlockParams& block,
                         std::size_t heads, double ln_eps);

struct EncoderParams {
  Tensor patch_proj;   // [m^2 C x D], no bias
  Tensor class_token;  // [1 x D]
  Tensor pos_embed;    // [(N+1) x D]; undefined when positional encoding is off
  std::vector<BlockParams> blocks;
  Tensor norm_gamma, norm_beta;
  Tensor classifier_w;  // [D x num_classes]
  Tensor classifier_b;  // [num_classes]

  bool has_pe() const { return pos_embed.defined(); }
  void append_to(ParameterList& out) const;
};

/// Truncated-normal(0.02) weights; zero biases, classifier and positional
/// encoding; unit layer-norm gains.
EncoderParams init_encoder(const ModelConfig& config, Rng& rng);

/// Closed-form parameter count of `init_encoder(config)`.
std::size_t encoder_parameter_count(const ModelConfig& config);

/// image [H x W x C] -> [N x m^2 C], patches in raster order over the grid and
/// each row the flattened m x m x C block.
Tensor patchify(const Tensor& image, std::size_t patch);
/// Inverse of `patchify`.
Tensor unpatchify(const Tensor& patches, std::size_t height, std::size_t width,
                  std::size_t channels, std::size_t patch);
/// Patchifies `batch` contiguous [H x W x C] images into [batch*N x m^2 C].
Tensor patchify_batch(std::span<const double> pixels, std::size_t batch,
                      const ModelConfig& config);

struct PatchSequence {
  Tensor tokens;  // [batch*(N+1) x D]; row b*(N+1) is image b's class token
  std::vector<std::size_t> abs_labels;  // 0..N-1, raster order
  std::size_t rows = 0, cols = 0;
  std::size_t batch = 1;
};

/// Projects each image's patches and prepends the class token. `patches` is
/// [batch*n x m^2 C] for any n; positional encodings (when present) require
/// n == N.
Tensor embed_tokens(const Tensor& patches, std::size_t batch, const EncoderParams& params);

/// Full-sequence embedding with absolute labels attached.
PatchSequence embed(const Tensor& patches, std::size_t batch, const EncoderParams& params,
                    const ModelConfig& config);

/// Transformer blocks plus final layer norm. tokens [batch*T x D].
Tensor encoder_forward(const Tensor& tokens, std::size_t batch, const EncoderParams& params,
                       const ModelConfig& config);

/// Class-token rows of the encoder output through the linear classifier:
/// [batch x num_classes].
Tensor classify(const Tensor& z, std::size_t batch, const EncoderParams& params);

}  // namespace posvit
