// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "batching.hpp"
#include "posvit/errors.hpp"

namespace posvit {

namespace detail {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::stream(seed, "shuffle", epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

Tensor batch_patches(const Dataset& data, std::span<const std::size_t> indices,
                     const Augmentations& flags, Rng& rng, const ModelConfig& config) {
  const std::size_t n = data.shape.numel();
  std::vector<double> pixels(indices.size() * n);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto img = data.image(indices[b]);
    if (flags.any()) {
      const auto aug = augment(img, data.shape, flags, rng);
      std::copy(aug.begin(), aug.end(), pixels.begin() + static_cast<long>(b * n));
    } else {
      std::copy(img.begin(), img.end(), pixels.begin() + static_cast<long>(b * n));
    }
  }
  return patchify_batch(pixels, indices.size(), config);
}

std::vector<std::size_t> batch_labels(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<std::size_t> labels;
  labels.reserve(indices.size());
  for (std::size_t i : indices) labels.push_back(data.labels[i]);
  return labels;
}

std::size_t batch_count(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

}  // namespace detail

void check_dataset(const Dataset& data, const ModelConfig& config) {
  if (data.size() == 0) throw ConfigError("dataset is empty");
  if (data.shape.height != config.image_height || data.shape.width != config.image_width ||
      data.shape.channels != config.channels) {
    throw ConfigError("dataset images are " + std::to_string(data.shape.height) + "x" +
                      std::to_string(data.shape.width) + "x" + std::to_string(data.shape.channels) +
                      " but the model expects " + std::to_string(config.image_height) + "x" +
                      std::to_string(config.image_width) + "x" + std::to_string(config.channels));
  }
  for (std::size_t l : data.labels) {
    if (l >= config.num_classes) {
      throw ConfigError("dataset label " + std::to_string(l) + " exceeds num_classes = " +
                        std::to_string(config.num_classes));
    }
  }
}

SupervisedTrainer::SupervisedTrainer(Model& model, const TrainConfig& config, const Dataset& train,
                                     const Dataset* validation)
    : model_(model), config_(config), train_(train), validation_(validation) {
  config_.validate();
  check_dataset(train_, model_.config);
  if (validation_) check_dataset(*validation_, model_.config);
  params_ = model_.parameters();
  state_ = make_adamw_state(params_);
}

std::size_t SupervisedTrainer::steps_per_epoch() const {
  return detail::batch_count(train_.size(), config_.batch_size);
}

void SupervisedTrainer::resume(AdamWState state, std::size_t epochs_done) {
  if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
    throw ConfigError("optimizer state does not match the model's parameters");
  }
  state_ = std::move(state);
  epoch_ = epochs_done;
}

EpochMetrics SupervisedTrainer::train_epoch() {
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig& cfg = model_.config;
  const std::size_t steps = steps_per_epoch();
  const std::size_t total_steps = steps * config_.epochs;
  const std::size_t warmup_steps = steps * config_.warmup_epochs;
  const auto order = detail::epoch_order(train_.size(), config_.seed, epoch_);
  Rng aug_rng = Rng::stream(config_.seed, "augment", epoch_);
  Rng pair_rng = Rng::stream(config_.seed, "pairs", epoch_);
  const std::size_t k5 = std::min<std::size_t>(5, cfg.num_classes);

  double ls = 0.0, lp = 0.0, joint = 0.0, lr = 0.0;
  std::size_t top1 = 0, top5 = 0, pos_correct = 0, pos_total = 0, seen = 0;
  const bool has_head = model_.absolute_head || model_.relative_head;
  ForwardOptions options{config_.lambda, config_.pair_budget, &pair_rng};
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t lo = s * config_.batch_size;
    const std::size_t hi = std::min(lo + config_.batch_size, train_.size());
    const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
    const std::size_t batch = idx.size();
    const Tensor patches = detail::batch_patches(train_, idx, config_.augment, aug_rng, cfg);
    const auto labels = detail::batch_labels(train_, idx);

    ForwardResult r = model_forward(model_, patches, batch, labels, options);
    const double j = r.joint.item();
    if (!std::isfinite(j)) {
      throw DivergenceError("non-finite joint loss at epoch " + std::to_string(epoch_) + ", step " +
                            std::to_string(s));
    }
    backward(r.joint);
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

    const double w = static_cast<double>(batch);
    ls += w * r.classification.item();
    if (has_head) lp += w * r.position.item();
    joint += w * j;
    top1 += topk_hits(r.logits.data(), cfg.num_classes, labels, 1);
    top5 += topk_hits(r.logits.data(), cfg.num_classes, labels, k5);
    pos_correct += r.position_correct;
    pos_total += r.position_total;
    seen += batch;
  }

  EpochMetrics m;
  m.epoch = epoch_;
  const double n = static_cast<double>(seen);
  m.ls = ls / n;
  m.joint = joint / n;
  if (has_head) {
    m.lp = lp / n;
    m.pos_top1 = static_cast<double>(pos_correct) / static_cast<double>(pos_total);
  }
  m.top1 = static_cast<double>(top1) / n;
  m.top5 = static_cast<double>(top5) / n;
  m.lr = lr;
  if (validation_) m.val = evaluate(model_, *validation_, config_, epoch_);
  if (config_.log_wall_time) {
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  ++epoch_;
  return m;
}

TrainResult SupervisedTrainer::run(const std::function<void(const EpochMetrics&)>& on_epoch) {
  TrainResult result;
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

TrainResult train_supervised(Model& model, const Dataset& train, const TrainConfig& config,
                             const Dataset* validation) {
  SupervisedTrainer trainer(model, config, train, validation);
  return trainer.run();
}

EvalMetrics evaluate(const Model& model, const Dataset& data, const TrainConfig& config,
                     std::size_t epoch) {
  const ModelConfig& cfg = model.config;
  check_dataset(data, cfg);
  Rng pair_rng = Rng::stream(config.seed, "eval.pairs", epoch);
  Rng unused(0);
  const ForwardOptions options{config.lambda, config.pair_budget, &pair_rng};
  const std::size_t k5 = std::min<std::size_t>(5, cfg.num_classes);
  const bool has_head = model.absolute_head || model.relative_head;
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  double ls = 0.0, lp = 0.0, joint = 0.0;
  std::size_t top1 = 0, top5 = 0, pos_correct = 0, pos_total = 0;
  for (std::size_t lo = 0; lo < data.size(); lo += config.batch_size) {
    const std::size_t hi = std::min(lo + config.batch_size, data.size());
    const std::span<const std::size_t> idx(all.data() + lo, hi - lo);
    const Tensor patches = detail::batch_patches(data, idx, Augmentations{}, unused, cfg);
    const auto labels = detail::batch_labels(data, idx);
    const ForwardResult r = model_forward(model, patches, idx.size(), labels, options);
    const double w = static_cast<double>(idx.size());
    ls += w * r.classification.item();
    if (has_head) lp += w * r.position.item();
    joint += w * r.joint.item();
    top1 += topk_hits(r.logits.data(), cfg.num_classes, labels, 1);
    top5 += topk_hits(r.logits.data(), cfg.num_classes, labels, k5);
    pos_correct += r.position_correct;
    pos_total += r.position_total;
  }
  EvalMetrics m;
  const double n = static_cast<double>(data.size());
  m.ls = ls / n;
  m.joint = joint / n;
  if (has_head) {
    m.lp = lp / n;
    m.pos_top1 = static_cast<double>(pos_correct) / static_cast<double>(pos_total);
  }
  m.top1 = static_cast<double>(top1) / n;
  m.top5 = static_cast<double>(top5) / n;
  return m;
}

}  // namespace posvit
