// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/position_labels.hpp"

#include <algorithm>
#include <numeric>

#include "posvit/errors.hpp"
#include "posvit/ops.hpp"

namespace posvit {

namespace {

void require_mode(const PositionHead& head, PositionMode mode, const char* op) {
  if (head.mode != mode) {
    throw ConfigError(std::string(op) + ": head is in " +
                      (head.mode == PositionMode::absolute ? "absolute" : "relative") + " mode");
  }
}

std::size_t count_top1(const Tensor& logits, std::span<const std::size_t> labels) {
  const std::size_t c = logits.extent(1);
  const auto v = logits.data();
  std::size_t hits = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const double* row = v.data() + r * c;
    // Lowest index wins ties.
    const std::size_t best = static_cast<std::size_t>(std::max_element(row, row + c) - row);
    if (best == labels[r]) ++hits;
  }
  return hits;
}

}  // namespace

RelativeIndexTable::RelativeIndexTable(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) throw ConfigError("relative index table needs a non-empty grid");
}

std::size_t RelativeIndexTable::index(long dr, long dc) const {
  const long r = static_cast<long>(rows_), c = static_cast<long>(cols_);
  if (dr <= -r || dr >= r || dc <= -c || dc >= c) {
    throw IndexError("relative offset (" + std::to_string(dr) + ", " + std::to_string(dc) +
                     ") outside a " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                     " grid");
  }
  return static_cast<std::size_t>((dr + r - 1) * (2 * c - 1) + (dc + c - 1));
}

std::pair<long, long> RelativeIndexTable::offset(std::size_t cls) const {
  if (cls >= num_classes()) {
    throw IndexError("relative class " + std::to_string(cls) + " outside [0, " +
                     std::to_string(num_classes()) + ")");
  }
  const long width = 2 * static_cast<long>(cols_) - 1;
  const long k = static_cast<long>(cls);
  return {k / width - (static_cast<long>(rows_) - 1), k % width - (static_cast<long>(cols_) - 1)};
}

std::vector<std::size_t> absolute_targets(std::size_t rows, std::size_t cols) {
  std::vector<std::size_t> t(rows * cols);
  std::iota(t.begin(), t.end(), std::size_t{0});
  return t;
}

void PositionHead::append_to(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "mlp.fc1.w", fc1_w, true});
  out.push_back({prefix + "mlp.fc1.b", fc1_b, false});
  out.push_back({prefix + "mlp.fc2.w", fc2_w, true});
  out.push_back({prefix + "mlp.fc2.b", fc2_b, false});
  out.push_back({prefix + "classifier", classifier, true});
}

PositionHead init_position_head(PositionMode mode, const ModelConfig& config, Rng& rng) {
  const std::size_t d = config.embed_dim, pd = config.pos_dim;
  auto trunc = [&rng](Shape s) {
    std::vector<double> v(shape_numel(s));
    for (double& x : v) x = rng.truncated_normal(0.02);
    return Tensor::from_data(std::move(s), std::move(v), true);
  };
  PositionHead h;
  h.mode = mode;
  h.num_classes = mode == PositionMode::absolute
                      ? config.num_patches()
                      : RelativeIndexTable(config.grid_rows(), config.grid_cols()).num_classes();
  h.fc1_w = trunc({d, d});
  h.fc1_b = Tensor::zeros({d}, true);
  h.fc2_w = trunc({d, pd});
  h.fc2_b = Tensor::zeros({pd}, true);
  h.classifier = Tensor::zeros({pd, h.num_classes}, true);
  return h;
}

Tensor position_logits(const PositionHead& head, const Tensor& features) {
  Tensor p = linear(gelu(linear(features, head.fc1_w, head.fc1_b)), head.fc2_w, head.fc2_b);
  return matmul(p, head.classifier);
}

PatchLayout PatchLayout::full(std::size_t batch, std::size_t num_patches) {
  PatchLayout l;
  l.batch = batch;
  l.tokens_per_image = num_patches + 1;
  l.positions.reserve(batch * num_patches);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < num_patches; ++i) l.positions.push_back(i);
  }
  return l;
}

void PatchLayout::validate(const Tensor& z) const {
  if (z.dim() != 2 || z.extent(0) != batch * tokens_per_image) {
    throw DimensionError("patch layout expects " + std::to_string(batch * tokens_per_image) +
                         " token rows, got " + shape_string(z.shape()));
  }
  if (tokens_per_image < 2) throw DimensionError("patch layout has no patch tokens");
  if (positions.size() != batch * patches_per_image()) {
    throw DimensionError("patch layout has " + std::to_string(positions.size()) +
                         " positions for " + std::to_string(batch * patches_per_image()) +
                         " patch tokens");
  }
}

PositionLoss absolute_position_loss(const Tensor& z, const PatchLayout& layout,
                                    const PositionHead& head) {
  require_mode(head, PositionMode::absolute, "absolute_position_loss");
  layout.validate(z);
  const std::size_t n = layout.patches_per_image();
  std::vector<std::size_t> rows;
  rows.reserve(layout.batch * n);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) rows.push_back(b * layout.tokens_per_image + 1 + i);
  }
  for (std::size_t p : layout.positions) {
    if (p >= head.num_classes) {
      throw IndexError("absolute position " + std::to_string(p) + " outside [0, " +
                       std::to_string(head.num_classes) + ")");
    }
  }
  Tensor logits = position_logits(head, gather_rows(z, rows));
  PositionLoss out;
  out.loss = cross_entropy(logits, layout.positions);
  out.correct = count_top1(logits, layout.positions);
  out.total = layout.positions.size();
  return out;
}

Tensor pair_features(const Tensor& z, std::size_t i, std::size_t j) {
  if (z.dim() != 2) throw DimensionError("pair_features: expected [T x D] encoder output");
  const std::size_t t = z.extent(0), d = z.extent(1);
  if (d % 2 != 0) throw DimensionError("pair_features: width " + std::to_string(d) + " is odd");
  if (i == 0 || j == 0 || i >= t || j >= t) {
    throw IndexError("pair_features: token indices must lie in [1, " + std::to_string(t - 1) +
                     "], got (" + std::to_string(i) + ", " + std::to_string(j) + ")");
  }
  Tensor half = slice(z, 1, 0, d / 2);
  const std::size_t rows[] = {i, j};
  Tensor both = gather_rows(half, rows);
  return reshape(concat(slice(both, 0, 0, 1), slice(both, 0, 1, 2), 1), {d});
}

PositionLoss relative_position_loss(const Tensor& z, const PatchLayout& layout,
                                    const PositionHead& head, const RelativeIndexTable& table,
                                    std::size_t pair_budget, Rng* rng) {
  require_mode(head, PositionMode::relative, "relative_position_loss");
  layout.validate(z);
  if (head.num_classes != table.num_classes()) {
    throw DimensionError("relative head has " + std::to_string(head.num_classes) +
                         " classes, table has " + std::to_string(table.num_classes()));
  }
  const std::size_t d = z.extent(1);
  if (d % 2 != 0) throw DimensionError("relative_position_loss: odd embedding width");
  const std::size_t n = layout.patches_per_image();
  const std::size_t all_pairs = n * n;
  const bool subsample = pair_budget != 0 && pair_budget < all_pairs;
  if (subsample && rng == nullptr) {
    throw ConfigError("relative_position_loss: pair subsampling needs an rng");
  }

  std::vector<std::size_t> left, right, targets;
  std::vector<std::size_t> pick(all_pairs);
  for (std::size_t b = 0; b < layout.batch; ++b) {
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    std::size_t count = all_pairs;
    if (subsample) {
      // Partial Fisher-Yates: the first `pair_budget` slots become a uniform
      // sample without replacement; sorted to keep the reduction order fixed.
      for (std::size_t s = 0; s < pair_budget; ++s) {
        std::swap(pick[s], pick[s + rng->below(all_pairs - s)]);
      }
      count = pair_budget;
      std::sort(pick.begin(), pick.begin() + static_cast<long>(count));
    }
    const std::size_t base = b * layout.tokens_per_image + 1;
    const std::size_t* pos = layout.positions.data() + b * n;
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t i = pick[s] / n, j = pick[s] % n;
      left.push_back(base + i);
      right.push_back(base + j);
      const long ri = static_cast<long>(pos[i] / table.cols()), ci = static_cast<long>(pos[i] % table.cols());
      const long rj = static_cast<long>(pos[j] / table.cols()), cj = static_cast<long>(pos[j] % table.cols());
      targets.push_back(table.index(rj - ri, cj - ci));
    }
  }

  Tensor half = slice(z, 1, 0, d / 2);
  Tensor features = concat(gather_rows(half, left), gather_rows(half, right), 1);
  Tensor logits = position_logits(head, features);
  PositionLoss out;
  out.loss = cross_entropy(logits, targets);
  out.correct = count_top1(logits, targets);
  out.total = targets.size();
  return out;
}

Tensor joint_loss(const Tensor& ls, const Tensor& lp, double lambda) {
  if (lambda < 0.0) throw ConfigError("joint_loss: lambda must be non-negative");
  return add(ls, scale(lp, lambda));
}

}  // namespace posvit
