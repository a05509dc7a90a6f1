// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/model.hpp"

#include "posvit/errors.hpp"
#include "posvit/ops.hpp"

namespace posvit {

ParameterList Model::parameters() const {
  ParameterList out;
  encoder.append_to(out);
  if (absolute_head) absolute_head->append_to(out, "apl.");
  if (relative_head) relative_head->append_to(out, "rpl.");
  return out;
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  Rng enc = Rng::stream(seed, "init.encoder");
  m.encoder = init_encoder(config, enc);
  if (has_absolute_head(config.head_mode)) {
    Rng r = Rng::stream(seed, "init.apl");
    m.absolute_head = init_position_head(PositionMode::absolute, config, r);
  }
  if (has_relative_head(config.head_mode)) {
    Rng r = Rng::stream(seed, "init.rpl");
    m.relative_head = init_position_head(PositionMode::relative, config, r);
  }
  return m;
}

ForwardResult model_forward(const Model& model, const Tensor& patches, std::size_t batch,
                            std::span<const std::size_t> labels, const ForwardOptions& options) {
  const ModelConfig& cfg = model.config;
  PatchSequence seq = embed(patches, batch, model.encoder, cfg);
  Tensor z = encoder_forward(seq.tokens, batch, model.encoder, cfg);

  ForwardResult r;
  r.logits = classify(z, batch, model.encoder);
  r.classification = cross_entropy(r.logits, labels);

  const PatchLayout layout = PatchLayout::full(batch, cfg.num_patches());
  if (model.absolute_head) {
    PositionLoss apl = absolute_position_loss(z, layout, *model.absolute_head);
    r.position = apl.loss;
    r.position_correct = apl.correct;
    r.position_total = apl.total;
  }
  if (model.relative_head) {
    const RelativeIndexTable table(cfg.grid_rows(), cfg.grid_cols());
    PositionLoss rpl = relative_position_loss(z, layout, *model.relative_head, table,
                                              options.pair_budget, options.pair_rng);
    if (r.position.defined()) {
      r.position = add(r.position, rpl.loss);
    } else {
      r.position = rpl.loss;
      r.position_correct = rpl.correct;
      r.position_total = rpl.total;
    }
  }
  r.joint = r.position.defined() ? joint_loss(r.classification, r.position, options.lambda)
                                 : r.classification;
  return r;
}

}  // namespace posvit
