// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/encoder.hpp"

#include <numeric>

#include "posvit/errors.hpp"
#include "posvit/ops.hpp"

namespace posvit {

namespace {

constexpr double kInitStd = 0.02;

Tensor trunc_normal(Shape shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.truncated_normal(kInitStd);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

std::size_t block_parameter_count(std::size_t w, std::size_t hidden) {
  return 4 * w                 // two layer norms
         + w * 3 * w + 2 * w   // qkv
         + w * w + w           // projection
         + w * hidden + hidden // fc1
         + hidden * w + w;     // fc2
}

}  // namespace

void BlockParams::append_to(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "ln1.gamma", ln1_gamma, false});
  out.push_back({prefix + "ln1.beta", ln1_beta, false});
  out.push_back({prefix + "attn.qkv.w", qkv_w, true});
  out.push_back({prefix + "attn.q.b", q_b, false});
  out.push_back({prefix + "attn.v.b", v_b, false});
  out.push_back({prefix + "attn.proj.w", proj_w, true});
  out.push_back({prefix + "attn.proj.b", proj_b, false});
  out.push_back({prefix + "ln2.gamma", ln2_gamma, false});
  out.push_back({prefix + "ln2.beta", ln2_beta, false});
  out.push_back({prefix + "mlp.fc1.w", fc1_w, true});
  out.push_back({prefix + "mlp.fc1.b", fc1_b, false});
  out.push_back({prefix + "mlp.fc2.w", fc2_w, true});
  out.push_back({prefix + "mlp.fc2.b", fc2_b, false});
}

BlockParams init_block(std::size_t width, std::size_t hidden, Rng& rng) {
  BlockParams b;
  b.ln1_gamma = ones({width});
  b.ln1_beta = zeros({width});
  b.qkv_w = trunc_normal({width, 3 * width}, rng);
  b.q_b = zeros({width});
  b.v_b = zeros({width});
  b.proj_w = trunc_normal({width, width}, rng);
  b.proj_b = zeros({width});
  b.ln2_gamma = ones({width});
  b.ln2_beta = zeros({width});
  b.fc1_w = trunc_normal({width, hidden}, rng);
  b.fc1_b = zeros({hidden});
  b.fc2_w = trunc_normal({hidden, width}, rng);
  b.fc2_b = zeros({width});
  return b;
}

Tensor transformer_block(const Tensor& x, std::size_t batch, const BlockParams& block,
                         std::size_t heads, double ln_eps) {
  Tensor h = layernorm(x, block.ln1_gamma, block.ln1_beta, ln_eps);
  const Tensor bias_parts[] = {block.q_b, Tensor::zeros(block.q_b.shape()), block.v_b};
  const Tensor qkv_b = concat(std::span<const Tensor>(bias_parts), 0);
  Tensor attn = multi_head_attention(linear(h, block.qkv_w, qkv_b), batch, heads);
  Tensor y = add(x, linear(attn, block.proj_w, block.proj_b));
  Tensor m = layernorm(y, block.ln2_gamma, block.ln2_beta, ln_eps);
  m = linear(gelu(linear(m, block.fc1_w, block.fc1_b)), block.fc2_w, block.fc2_b);
  return add(y, m);
}

void EncoderParams::append_to(ParameterList& out) const {
  out.push_back({"encoder.patch_proj", patch_proj, true});
  out.push_back({"encoder.class_token", class_token, false});
  if (has_pe()) out.push_back({"encoder.pos_embed", pos_embed, false});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].append_to(out, "encoder.block" + std::to_string(i) + ".");
  }
  out.push_back({"encoder.norm.gamma", norm_gamma, false});
  out.push_back({"encoder.norm.beta", norm_beta, false});
  out.push_back({"classifier.w", classifier_w, true});
  out.push_back({"classifier.b", classifier_b, false});
}

EncoderParams init_encoder(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.embed_dim;
  EncoderParams p;
  p.patch_proj = trunc_normal({config.patch_dim(), d}, rng);
  p.class_token = trunc_normal({1, d}, rng);
  if (config.use_pe) p.pos_embed = zeros({config.num_patches() + 1, d});
  for (std::size_t i = 0; i < config.depth; ++i) {
    p.blocks.push_back(init_block(d, config.mlp_hidden(), rng));
  }
  p.norm_gamma = ones({d});
  p.norm_beta = zeros({d});
  p.classifier_w = zeros({d, config.num_classes});
  p.classifier_b = zeros({config.num_classes});
  return p;
}

std::size_t encoder_parameter_count(const ModelConfig& config) {
  const std::size_t d = config.embed_dim;
  std::size_t n = config.patch_dim() * d + d;
  if (config.use_pe) n += (config.num_patches() + 1) * d;
  n += config.depth * block_parameter_count(d, config.mlp_hidden());
  n += 2 * d;
  n += d * config.num_classes + config.num_classes;
  return n;
}

Tensor patchify(const Tensor& image, std::size_t patch) {
  if (image.dim() != 3) {
    throw DimensionError("patchify: expected an [H x W x C] image, got " +
                         shape_string(image.shape()));
  }
  const std::size_t h = image.extent(0), w = image.extent(1), c = image.extent(2);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw DimensionError("patchify: image " + shape_string(image.shape()) +
                         " is not divisible into " + std::to_string(patch) + "x" +
                         std::to_string(patch) + " patches");
  }
  ModelConfig cfg;
  cfg.image_height = h;
  cfg.image_width = w;
  cfg.channels = c;
  cfg.patch = patch;
  return patchify_batch(image.data(), 1, cfg);
}

Tensor patchify_batch(std::span<const double> pixels, std::size_t batch,
                      const ModelConfig& config) {
  const std::size_t h = config.image_height, w = config.image_width, c = config.channels;
  const std::size_t m = config.patch;
  if (pixels.size() != batch * h * w * c) {
    throw DimensionError("patchify_batch: expected " + std::to_string(batch * h * w * c) +
                         " pixels, got " + std::to_string(pixels.size()));
  }
  const std::size_t rows = h / m, cols = w / m, pd = m * m * c, n = rows * cols;
  std::vector<double> out(batch * n * pd);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* img = pixels.data() + b * h * w * c;
    for (std::size_t pr = 0; pr < rows; ++pr) {
      for (std::size_t pc = 0; pc < cols; ++pc) {
        double* dst = out.data() + ((b * n) + pr * cols + pc) * pd;
        for (std::size_t y = 0; y < m; ++y) {
          const double* src = img + ((pr * m + y) * w + pc * m) * c;
          std::copy_n(src, m * c, dst + y * m * c);
        }
      }
    }
  }
  return Tensor::from_data({batch * n, pd}, std::move(out));
}

Tensor unpatchify(const Tensor& patches, std::size_t height, std::size_t width,
                  std::size_t channels, std::size_t patch) {
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw DimensionError("unpatchify: extents not divisible by patch");
  }
  const std::size_t rows = height / patch, cols = width / patch;
  const std::size_t pd = patch * patch * channels;
  if (patches.shape() != Shape{rows * cols, pd}) {
    throw DimensionError("unpatchify: expected " + shape_string({rows * cols, pd}) + ", got " +
                         shape_string(patches.shape()));
  }
  std::vector<double> out(height * width * channels);
  const auto src = patches.data();
  for (std::size_t pr = 0; pr < rows; ++pr) {
    for (std::size_t pc = 0; pc < cols; ++pc) {
      const double* p = src.data() + (pr * cols + pc) * pd;
      for (std::size_t y = 0; y < patch; ++y) {
        std::copy_n(p + y * patch * channels, patch * channels,
                    out.data() + ((pr * patch + y) * width + pc * patch) * channels);
      }
    }
  }
  return Tensor::from_data({height, width, channels}, std::move(out));
}

Tensor embed_tokens(const Tensor& patches, std::size_t batch, const EncoderParams& params) {
  if (patches.dim() != 2 || batch == 0 || patches.extent(0) % batch != 0) {
    throw DimensionError("embed: patches " + shape_string(patches.shape()) +
                         " do not split into batch " + std::to_string(batch));
  }
  if (patches.extent(1) != params.patch_proj.extent(0)) {
    throw DimensionError("embed: patch width " + std::to_string(patches.extent(1)) +
                         " does not match projection " + shape_string(params.patch_proj.shape()));
  }
  const std::size_t n = patches.extent(0) / batch;
  const std::size_t t = n + 1;
  if (params.has_pe() && params.pos_embed.extent(0) != t) {
    throw DimensionError("embed: positional encoding covers " +
                         std::to_string(params.pos_embed.extent(0)) + " tokens, sequence has " +
                         std::to_string(t));
  }
  Tensor projected = matmul(patches, params.patch_proj);
  // Interleave: row b*t is the class token (appended as the last source row).
  Tensor source = concat(projected, params.class_token, 0);
  std::vector<std::size_t> order(batch * t);
  const std::size_t class_row = batch * n;
  for (std::size_t b = 0; b < batch; ++b) {
    order[b * t] = class_row;
    for (std::size_t i = 0; i < n; ++i) order[b * t + 1 + i] = b * n + i;
  }
  Tensor tokens = gather_rows(source, order);
  if (params.has_pe()) tokens = add_broadcast(tokens, params.pos_embed);
  return tokens;
}

PatchSequence embed(const Tensor& patches, std::size_t batch, const EncoderParams& params,
                    const ModelConfig& config) {
  const std::size_t n = config.num_patches();
  if (patches.dim() != 2 || patches.extent(0) != batch * n) {
    throw DimensionError("embed: expected " + std::to_string(batch * n) + " patch rows, got " +
                         shape_string(patches.shape()));
  }
  PatchSequence seq;
  seq.tokens = embed_tokens(patches, batch, params);
  seq.abs_labels.resize(n);
  std::iota(seq.abs_labels.begin(), seq.abs_labels.end(), std::size_t{0});
  seq.rows = config.grid_rows();
  seq.cols = config.grid_cols();
  seq.batch = batch;
  return seq;
}

Tensor encoder_forward(const Tensor& tokens, std::size_t batch, const EncoderParams& params,
                       const ModelConfig& config) {
  if (tokens.dim() != 2 || tokens.extent(1) != config.embed_dim) {
    throw DimensionError("encoder_forward: tokens " + shape_string(tokens.shape()) +
                         " do not have width " + std::to_string(config.embed_dim));
  }
  Tensor x = tokens;
  for (const BlockParams& block : params.blocks) {
    x = transformer_block(x, batch, block, config.heads, config.ln_eps);
  }
  return layernorm(x, params.norm_gamma, params.norm_beta, config.ln_eps);
}

Tensor classify(const Tensor& z, std::size_t batch, const EncoderParams& params) {
  if (z.dim() != 2 || batch == 0 || z.extent(0) % batch != 0) {
    throw DimensionError("classify: encoder output " + shape_string(z.shape()) +
                         " does not split into batch " + std::to_string(batch));
  }
  const std::size_t t = z.extent(0) / batch;
  std::vector<std::size_t> rows(batch);
  for (std::size_t b = 0; b < batch; ++b) rows[b] = b * t;
  return linear(gather_rows(z, rows), params.classifier_w, params.classifier_b);
}

}  // namespace posvit
