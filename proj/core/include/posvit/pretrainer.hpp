// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "posvit/dataset.hpp"
#include "posvit/mae.hpp"
#include "posvit/metrics.hpp"
#include "posvit/optim.hpp"
#include "posvit/train_config.hpp"
#include "posvit/trainer.hpp"

namespace posvit {

struct PretrainResult {
  std::vector<PretrainMetrics> history;
  bool diverged = false;
  std::string error;
};

/// Masked-autoencoder pretraining with the positional-label heads on the
/// visible tokens (total = L_recon + lambda L_p). Each image gets its own
/// mask, seeded from the "mask" stream of the epoch. Labels are unused.
class MaeTrainer {
 public:
  MaeTrainer(MaeModel& model, const TrainConfig& config, const Dataset& train);

  PretrainMetrics train_epoch();
  PretrainResult run(const std::function<void(const PretrainMetrics&)>& on_epoch = {});

  std::size_t epochs_done() const { return epoch_; }
  std::size_t steps_per_epoch() const;
  const AdamWState& optimizer_state() const { return state_; }
  void resume(AdamWState state, std::size_t epochs_done);

 private:
  MaeModel& model_;
  TrainConfig config_;
  const Dataset& train_;
  ParameterList params_;
  AdamWState state_;
  std::size_t epoch_ = 0;
};

PretrainResult pretrain_mae(MaeModel& model, const Dataset& train, const TrainConfig& config);

struct PretrainFinetuneResult {
  PretrainResult pretrain;
  Model model;  // fine-tuned encoder with positional encoding, no position heads
  TrainResult finetune;
};

/// MAE pretraining of a PE-free encoder, `finetune_init`, then supervised
/// fine-tuning without positional heads.
PretrainFinetuneResult pretrain_then_finetune(const ModelConfig& config, const Dataset& train,
                                              const TrainConfig& pretrain,
                                              const TrainConfig& finetune,
                                              const Dataset* validation = nullptr);

}  // namespace posvit
