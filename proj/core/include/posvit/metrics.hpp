// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "posvit/tensor.hpp"

namespace posvit {

/// Number of rows whose label is among the k largest logits. Ties rank the
/// lower class index first.
std::size_t topk_hits(std::span<const double> logits, std::size_t classes,
                      std::span<const std::size_t> labels, std::size_t k);

/// Fraction of rows of `logits` [B x c] whose label is among the k largest
/// logits. Throws ConfigError when k is 0 or exceeds c.
double topk_accuracy(const Tensor& logits, std::span<const std::size_t> labels, std::size_t k);

/// Quantities measured on a held-out set after an epoch.
struct EvalMetrics {
  double ls = 0.0;
  std::optional<double> lp;
  double joint = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::optional<double> pos_top1;
};

/// One row of the supervised metrics CSV. Losses and accuracies are
/// sample-weighted means over the epoch's training batches; position fields
/// are empty when no positional head is attached.
struct EpochMetrics {
  std::size_t epoch = 0;
  double ls = 0.0;
  std::optional<double> lp;
  double joint = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::optional<double> pos_top1;
  double lr = 0.0;
  double seconds = 0.0;
  std::optional<EvalMetrics> val;
};

/// One row of the pretraining metrics CSV.
struct PretrainMetrics {
  std::size_t epoch = 0;
  double recon = 0.0;
  std::optional<double> lp;
  double joint = 0.0;
  std::optional<double> pos_top1;
  double lr = 0.0;
  double seconds = 0.0;
};

/// At most 9 significant digits, independent of the process locale.
std::string format_number(double value);

std::string metrics_header(bool extended);
std::string metrics_row(const EpochMetrics& m, bool extended);
void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> rows, bool extended);

std::string pretrain_header();
std::string pretrain_row(const PretrainMetrics& m);
void write_pretrain_csv(std::ostream& out, std::span<const PretrainMetrics> rows);

}  // namespace posvit
