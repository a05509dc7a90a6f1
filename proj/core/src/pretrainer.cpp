// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/pretrainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "batching.hpp"
#include "posvit/errors.hpp"

namespace posvit {

MaeTrainer::MaeTrainer(MaeModel& model, const TrainConfig& config, const Dataset& train)
    : model_(model), config_(config), train_(train) {
  config_.validate();
  check_dataset(train_, model_.config);
  params_ = model_.parameters();
  state_ = make_adamw_state(params_);
}

std::size_t MaeTrainer::steps_per_epoch() const {
  return detail::batch_count(train_.size(), config_.batch_size);
}

void MaeTrainer::resume(AdamWState state, std::size_t epochs_done) {
  if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
    throw ConfigError("optimizer state does not match the model's parameters");
  }
  state_ = std::move(state);
  epoch_ = epochs_done;
}

PretrainMetrics MaeTrainer::train_epoch() {
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig& cfg = model_.config;
  const std::size_t steps = steps_per_epoch();
  const std::size_t total_steps = steps * config_.epochs;
  const std::size_t warmup_steps = steps * config_.warmup_epochs;
  const auto order = detail::epoch_order(train_.size(), config_.seed, epoch_);
  Rng aug_rng = Rng::stream(config_.seed, "augment", epoch_);
  Rng pair_rng = Rng::stream(config_.seed, "pairs", epoch_);
  Rng mask_rng = Rng::stream(config_.seed, "mask", epoch_);
  const bool has_head = model_.absolute_head || model_.relative_head;
  MaeOptions options{config_.lambda, config_.norm_pix_loss, config_.pair_budget, &pair_rng};

  double recon = 0.0, lp = 0.0, joint = 0.0, lr = 0.0;
  std::size_t pos_correct = 0, pos_total = 0, seen = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t lo = s * config_.batch_size;
    const std::size_t hi = std::min(lo + config_.batch_size, train_.size());
    const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
    const Tensor patches = detail::batch_patches(train_, idx, config_.augment, aug_rng, cfg);
    std::vector<MaskPlan> plans;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      plans.push_back(sample_mask(cfg.num_patches(), config_.mask_ratio, mask_rng.next_u64()));
    }

    MaeOutput out = mae_forward(patches, plans, model_, options);
    const double total = out.total.item();
    if (!std::isfinite(total)) {
      throw DivergenceError("non-finite pretraining loss at epoch " + std::to_string(epoch_) +
                            ", step " + std::to_string(s));
    }
    backward(out.total);
    lr = lr_at(epoch_ * steps + s, total_steps, warmup_steps, config_.base_lr);
    try {
      if (config_.grad_clip > 0.0) clip_grad_norm(params_, config_.grad_clip);
      adamw_step(params_, state_,
                 {lr, config_.beta1, config_.beta2, config_.adam_eps, config_.weight_decay});
    } catch (const NumericError& e) {
      throw DivergenceError("epoch " + std::to_string(epoch_) + ", step " + std::to_string(s) +
                            ": " + e.what());
    }
    zero_grads(params_);

    const double w = static_cast<double>(idx.size());
    recon += w * out.recon_loss.item();
    if (has_head) lp += w * out.position_loss.item();
    joint += w * total;
    pos_correct += out.position_correct;
    pos_total += out.position_total;
    seen += idx.size();
  }

  PretrainMetrics m;
  m.epoch = epoch_;
  const double n = static_cast<double>(seen);
  m.recon = recon / n;
  m.joint = joint / n;
  if (has_head) {
    m.lp = lp / n;
    m.pos_top1 = static_cast<double>(pos_correct) / static_cast<double>(pos_total);
  }
  m.lr = lr;
  if (config_.log_wall_time) {
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  ++epoch_;
  return m;
}

PretrainResult MaeTrainer::run(const std::function<void(const PretrainMetrics&)>& on_epoch) {
  PretrainResult result;
  while (epoch_ < config_.epochs) {
    try {
      result.history.push_back(train_epoch());
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.error = e.what();
      break;
    }
    if (on_epoch) on_epoch(result.history.back());
  }
  return result;
}

PretrainResult pretrain_mae(MaeModel& model, const Dataset& train, const TrainConfig& config) {
  MaeTrainer trainer(model, config, train);
  return trainer.run();
}

PretrainFinetuneResult pretrain_then_finetune(const ModelConfig& config, const Dataset& train,
                                              const TrainConfig& pretrain,
                                              const TrainConfig& finetune,
                                              const Dataset* validation) {
  PretrainFinetuneResult result;
  MaeModel mae = init_mae(config, pretrain.seed);
  result.pretrain = pretrain_mae(mae, train, pretrain);
  if (result.pretrain.diverged) return result;
  result.model = finetune_model(mae);
  result.finetune = train_supervised(result.model, train, finetune, validation);
  return result;
}

}  // namespace posvit
