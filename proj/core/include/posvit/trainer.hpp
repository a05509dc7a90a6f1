// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "posvit/dataset.hpp"
#include "posvit/metrics.hpp"
#include "posvit/model.hpp"
#include "posvit/optim.hpp"
#include "posvit/train_config.hpp"

namespace posvit {

struct TrainResult {
  std::vector<EpochMetrics> history;
  bool diverged = false;
  std::string error;  // diagnostic when diverged
};

/// Joint classification + positional-label training (L = L_s + lambda L_p).
///
/// Every epoch draws its shuffle, augmentation and pair-sampling randomness
/// from named streams of `config.seed` indexed by the epoch, so a run resumed
/// from a checkpoint continues exactly like an unbroken one. The model is
/// updated in place.
class SupervisedTrainer {
 public:
  SupervisedTrainer(Model& model, const TrainConfig& config, const Dataset& train,
                    const Dataset* validation = nullptr);

  /// Runs the next epoch. Throws DivergenceError on a non-finite loss or
  /// gradient.
  EpochMetrics train_epoch();

  /// Trains until `config.epochs` epochs are complete. Divergence stops the
  /// run and is reported in the result together with the completed epochs.
  TrainResult run(const std::function<void(const EpochMetrics&)>& on_epoch = {});

  std::size_t epochs_done() const { return epoch_; }
  std::size_t steps_per_epoch() const;
  const AdamWState& optimizer_state() const { return state_; }

  /// Continues from a saved optimizer state after `epochs_done` epochs.
  void resume(AdamWState state, std::size_t epochs_done);

 private:
  Model& model_;
  TrainConfig config_;
  const Dataset& train_;
  const Dataset* validation_;
  ParameterList params_;
  AdamWState state_;
  std::size_t epoch_ = 0;
};

TrainResult train_supervised(Model& model, const Dataset& train, const TrainConfig& config,
                             const Dataset* validation = nullptr);

/// Forward-only losses and accuracies over a dataset, without augmentation.
EvalMetrics evaluate(const Model& model, const Dataset& data, const TrainConfig& config,
                     std::size_t epoch = 0);

/// Throws ConfigError when the dataset's images or labels do not fit `config`.
void check_dataset(const Dataset& data, const ModelConfig& config);

}  // namespace posvit
