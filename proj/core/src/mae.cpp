// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/mae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "posvit/errors.hpp"
#include "posvit/ops.hpp"

namespace posvit {

MaskPlan sample_mask(std::size_t num_patches, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw ConfigError("mask ratio must lie in [0, 1), got " + std::to_string(ratio));
  }
  if (num_patches == 0) throw ConfigError("mask plan needs at least one patch");
  MaskPlan plan;
  plan.num_patches = num_patches;
  plan.ratio = ratio;
  plan.seed = seed;
  const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(num_patches)));
  std::vector<std::size_t> order(num_patches);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(order[i], order[i + rng.below(num_patches - i)]);
  }
  plan.masked.assign(order.begin(), order.begin() + static_cast<long>(count));
  std::sort(plan.masked.begin(), plan.masked.end());
  std::vector<bool> is_masked(num_patches, false);
  for (std::size_t m : plan.masked) is_masked[m] = true;
  for (std::size_t i = 0; i < num_patches; ++i) {
    if (!is_masked[i]) plan.visible.push_back(i);
  }
  return plan;
}

PatchLayout visible_layout(std::span<const MaskPlan> plans) {
  if (plans.empty()) throw DimensionError("visible_layout: no mask plans");
  const std::size_t n_visible = plans[0].visible.size();
  if (n_visible == 0) throw DimensionError("visible_layout: no visible patches");
  PatchLayout layout;
  layout.batch = plans.size();
  layout.tokens_per_image = n_visible + 1;
  for (const MaskPlan& p : plans) {
    if (p.visible.size() != n_visible) {
      throw DimensionError("visible_layout: plans in a batch must keep the same number of visible patches");
    }
    layout.positions.insert(layout.positions.end(), p.visible.begin(), p.visible.end());
  }
  return layout;
}

void DecoderParams::append_to(ParameterList& out) const {
  out.push_back({"decoder.embed.w", embed_w, true});
  out.push_back({"decoder.embed.b", embed_b, false});
  out.push_back({"decoder.mask_token", mask_token, false});
  out.push_back({"decoder.pos_embed", pos_embed, false});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].append_to(out, "decoder.block" + std::to_string(i) + ".");
  }
  out.push_back({"decoder.norm.gamma", norm_gamma, false});
  out.push_back({"decoder.norm.beta", norm_beta, false});
  out.push_back({"decoder.pred.w", pred_w, true});
  out.push_back({"decoder.pred.b", pred_b, false});
}

DecoderParams init_decoder(const ModelConfig& config, Rng& rng) {
  const std::size_t d = config.embed_dim, w = config.decoder_width();
  auto trunc = [&rng](Shape s) {
    std::vector<double> v(shape_numel(s));
    for (double& x : v) x = rng.truncated_normal(0.02);
    return Tensor::from_data(std::move(s), std::move(v), true);
  };
  DecoderParams p;
  p.embed_w = trunc({d, w});
  p.embed_b = Tensor::zeros({w}, true);
  p.mask_token = trunc({1, w});
  p.pos_embed = trunc({config.num_patches() + 1, w});
  for (std::size_t i = 0; i < config.decoder_depth; ++i) {
    p.blocks.push_back(init_block(w, config.mlp_ratio * w, rng));
  }
  p.norm_gamma = Tensor::full({w}, 1.0, true);
  p.norm_beta = Tensor::zeros({w}, true);
  p.pred_w = trunc({w, config.patch_dim()});
  p.pred_b = Tensor::zeros({config.patch_dim()}, true);
  return p;
}

ParameterList MaeModel::parameters() const {
  ParameterList out;
  encoder.append_to(out);
  decoder.append_to(out);
  if (absolute_head) absolute_head->append_to(out, "apl.");
  if (relative_head) relative_head->append_to(out, "rpl.");
  return out;
}

MaeModel init_mae(const ModelConfig& config, std::uint64_t seed) {
  ModelConfig cfg = config;
  cfg.use_pe = false;
  cfg.validate();
  MaeModel m;
  m.config = cfg;
  Rng enc = Rng::stream(seed, "init.encoder");
  m.encoder = init_encoder(cfg, enc);
  Rng dec = Rng::stream(seed, "init.decoder");
  m.decoder = init_decoder(cfg, dec);
  if (has_absolute_head(cfg.head_mode)) {
    Rng r = Rng::stream(seed, "init.apl");
    m.absolute_head = init_position_head(PositionMode::absolute, cfg, r);
  }
  if (has_relative_head(cfg.head_mode)) {
    Rng r = Rng::stream(seed, "init.rpl");
    m.relative_head = init_position_head(PositionMode::relative, cfg, r);
  }
  return m;
}

namespace {

// Per-patch standardization of reconstruction targets (not differentiated).
Tensor normalize_rows(const Tensor& rows) {
  const std::size_t r = rows.extent(0), c = rows.extent(1);
  std::vector<double> out(rows.data().begin(), rows.data().end());
  for (std::size_t i = 0; i < r; ++i) {
    double* row = out.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c > 1 ? c - 1 : 1);
    const double inv = 1.0 / std::sqrt(var + 1e-6);
    for (std::size_t j = 0; j < c; ++j) row[j] = (row[j] - mu) * inv;
  }
  return Tensor::from_data({r, c}, std::move(out));
}

}  // namespace

MaeOutput mae_forward(const Tensor& patches, const Tensor& targets,
                      std::span<const MaskPlan> plans, const MaeModel& model,
                      const MaeOptions& options) {
  const ModelConfig& cfg = model.config;
  const std::size_t n = cfg.num_patches();
  const std::size_t batch = plans.size();
  if (batch == 0) throw DimensionError("mae_forward: no mask plans");
  if (model.encoder.has_pe()) {
    throw ConfigError("mae_forward: the encoder must not carry positional encoding during pretraining");
  }
  if (patches.dim() != 2 || patches.extent(0) != batch * n || patches.extent(1) != cfg.patch_dim()) {
    throw DimensionError("mae_forward: patches " + shape_string(patches.shape()) + " do not match " +
                         std::to_string(batch) + " images of " + std::to_string(n) + " patches");
  }
  if (targets.shape() != patches.shape()) {
    throw DimensionError("mae_forward: targets " + shape_string(targets.shape()) +
                         " differ from patches " + shape_string(patches.shape()));
  }
  for (const MaskPlan& p : plans) {
    if (p.num_patches != n) {
      throw DimensionError("mae_forward: plan covers " + std::to_string(p.num_patches) +
                           " patches, image has " + std::to_string(n));
    }
  }
  const PatchLayout layout = visible_layout(plans);
  const std::size_t n_visible = layout.patches_per_image();

  // Encoder over visible patches only.
  std::vector<std::size_t> visible_rows;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t v : plans[b].visible) visible_rows.push_back(b * n + v);
  }
  Tensor tokens = embed_tokens(gather_rows(patches, visible_rows), batch, model.encoder);
  Tensor z = encoder_forward(tokens, batch, model.encoder, cfg);

  MaeOutput out;
  if (model.absolute_head) {
    PositionLoss apl = absolute_position_loss(z, layout, *model.absolute_head);
    out.position_loss = apl.loss;
    out.position_correct = apl.correct;
    out.position_total = apl.total;
  }
  if (model.relative_head) {
    const RelativeIndexTable table(cfg.grid_rows(), cfg.grid_cols());
    PositionLoss rpl = relative_position_loss(z, layout, *model.relative_head, table,
                                              options.pair_budget, options.pair_rng);
    if (out.position_loss.defined()) {
      out.position_loss = add(out.position_loss, rpl.loss);
    } else {
      out.position_loss = rpl.loss;
      out.position_correct = rpl.correct;
      out.position_total = rpl.total;
    }
  }

  // Decoder over the full sequence: encoded visibles back at their raster
  // slots, the shared mask token everywhere else.
  const DecoderParams& dec = model.decoder;
  Tensor y = linear(z, dec.embed_w, dec.embed_b);
  Tensor source = concat(y, dec.mask_token, 0);
  const std::size_t mask_row = batch * (n_visible + 1);
  std::vector<std::size_t> order(batch * (n + 1), mask_row);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t enc_base = b * (n_visible + 1);
    order[b * (n + 1)] = enc_base;
    for (std::size_t k = 0; k < n_visible; ++k) {
      order[b * (n + 1) + 1 + plans[b].visible[k]] = enc_base + 1 + k;
    }
  }
  Tensor x = add_broadcast(gather_rows(source, order), dec.pos_embed);
  for (const BlockParams& block : dec.blocks) {
    x = transformer_block(x, batch, block, cfg.decoder_head_count(), cfg.ln_eps);
  }
  x = layernorm(x, dec.norm_gamma, dec.norm_beta, cfg.ln_eps);
  Tensor pred = linear(x, dec.pred_w, dec.pred_b);

  std::vector<std::size_t> patch_rows, pred_masked, target_masked;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) patch_rows.push_back(b * (n + 1) + 1 + i);
    for (std::size_t m : plans[b].masked) {
      pred_masked.push_back(b * (n + 1) + 1 + m);
      target_masked.push_back(b * n + m);
    }
  }
  out.reconstruction = gather_rows(pred, patch_rows);
  if (pred_masked.empty()) {
    out.recon_loss = Tensor::scalar(0.0);
  } else {
    Tensor target = gather_rows(targets, target_masked);
    if (options.norm_pix_loss) target = normalize_rows(target);
    Tensor diff = sub(gather_rows(pred, pred_masked), target);
    out.recon_loss = mean(mul(diff, diff));
  }
  out.total = out.position_loss.defined()
                  ? joint_loss(out.recon_loss, out.position_loss, options.lambda)
                  : out.recon_loss;
  return out;
}

EncoderParams clone_encoder(const EncoderParams& params) {
  auto copy = [](const Tensor& t) { return t.defined() ? t.detach(true) : Tensor(); };
  EncoderParams c;
  c.patch_proj = copy(params.patch_proj);
  c.class_token = copy(params.class_token);
  c.pos_embed = copy(params.pos_embed);
  for (const BlockParams& b : params.blocks) {
    c.blocks.push_back({copy(b.ln1_gamma), copy(b.ln1_beta), copy(b.qkv_w), copy(b.q_b), copy(b.v_b),
                        copy(b.proj_w), copy(b.proj_b), copy(b.ln2_gamma), copy(b.ln2_beta),
                        copy(b.fc1_w), copy(b.fc1_b), copy(b.fc2_w), copy(b.fc2_b)});
  }
  c.norm_gamma = copy(params.norm_gamma);
  c.norm_beta = copy(params.norm_beta);
  c.classifier_w = copy(params.classifier_w);
  c.classifier_b = copy(params.classifier_b);
  return c;
}

EncoderParams finetune_init(const EncoderParams& pretrained, const ModelConfig& config) {
  if (pretrained.has_pe()) {
    throw ConfigError("finetune_init: encoder already has a positional encoding");
  }
  EncoderParams p = clone_encoder(pretrained);
  p.pos_embed = Tensor::zeros({config.num_patches() + 1, config.embed_dim}, true);
  return p;
}

Model finetune_model(const MaeModel& pretrained) {
  Model m;
  m.config = pretrained.config;
  m.config.use_pe = true;
  m.config.head_mode = HeadMode::none;
  m.encoder = finetune_init(pretrained.encoder, m.config);
  return m;
}

}  // namespace posvit
