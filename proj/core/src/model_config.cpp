// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/model_config.hpp"

#include "posvit/errors.hpp"

namespace posvit {

std::string_view to_string(HeadMode mode) {
  switch (mode) {
    case HeadMode::none: return "none";
    case HeadMode::apl: return "apl";
    case HeadMode::rpl: return "rpl";
    case HeadMode::both: return "both";
  }
  return "none";
}

HeadMode parse_head_mode(std::string_view text) {
  if (text == "none") return HeadMode::none;
  if (text == "apl") return HeadMode::apl;
  if (text == "rpl") return HeadMode::rpl;
  if (text == "both") return HeadMode::both;
  throw ConfigError("unknown head_mode '" + std::string(text) + "' (expected none|apl|rpl|both)");
}

std::size_t ModelConfig::decoder_width() const {
  return decoder_dim != 0 ? decoder_dim : embed_dim / 2;
}

std::size_t ModelConfig::decoder_head_count() const {
  if (decoder_heads != 0) return decoder_heads;
  const std::size_t w = decoder_width();
  std::size_t h = heads;
  while (h > 1 && w % h != 0) --h;
  return h == 0 ? 1 : h;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (image_height == 0 || image_width == 0 || channels == 0) fail("image extents must be positive");
  if (patch == 0) fail("patch must be positive");
  if (image_height % patch != 0 || image_width % patch != 0) {
    fail("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
         " is not divisible by patch " + std::to_string(patch));
  }
  if (embed_dim == 0 || embed_dim % 2 != 0) fail("embed_dim must be positive and even");
  if (heads == 0 || embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
  if (mlp_ratio == 0) fail("mlp_ratio must be positive");
  if (pos_dim == 0) fail("pos_dim must be positive");
  if (num_classes < 2) fail("num_classes must be at least 2");
  if (decoder_width() == 0) fail("decoder width must be positive");
  if (decoder_width() % decoder_head_count() != 0) fail("decoder width must be divisible by decoder heads");
  if (!(ln_eps > 0.0)) fail("ln_eps must be positive");
}

}  // namespace posvit
