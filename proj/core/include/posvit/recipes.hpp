// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "posvit/experiment.hpp"
#include "posvit/gradcheck.hpp"
#include "posvit/model_config.hpp"

namespace posvit {

/// Options that only some commands take.
struct RecipeOptions {
  std::vector<double> mask_ratios;  // pretrain-mae; defaults to the config's mask_ratio
};

/// train, eval, gradcheck, finetune, pretrain-mae, ablate-pe, sweep-lambda,
/// ablate-augment.
const std::vector<std::string>& command_names();

/// Runs a command, writing per-cell CSVs, a summary CSV and resolved configs
/// under `config.output_dir`. Returns 0 on success and 1 when a run diverged
/// or the gradient check failed. Throws on configuration and IO errors.
int run_command(const std::string& command, const ExperimentConfig& config,
                const RecipeOptions& options, std::ostream& log);

/// Values of lambda covered by sweep-lambda.
const std::vector<double>& lambda_sweep_values();

/// Finite-difference check of the supervised joint loss (classifier plus the
/// heads selected by `config.head_mode`) on two random images. Every
/// parameter is first perturbed by Normal(0, 0.1) so that zero-initialized
/// weights carry nonzero gradients.
GradCheckReport gradcheck_model(const ModelConfig& config, double lambda, std::size_t samples,
                                double h, std::uint64_t seed);

/// Same check for the MAE pretraining loss with masks of `mask_ratio`.
GradCheckReport gradcheck_mae(const ModelConfig& config, double lambda, double mask_ratio,
                              std::size_t samples, double h, std::uint64_t seed);

}  // namespace posvit
