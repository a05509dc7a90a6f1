// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/metrics.hpp"

#include <charconv>
#include <cmath>

#include "posvit/errors.hpp"

namespace posvit {

std::size_t topk_hits(std::span<const double> logits, std::size_t classes,
                      std::span<const std::size_t> labels, std::size_t k) {
  if (classes == 0 || logits.size() != labels.size() * classes) {
    throw DimensionError("topk: " + std::to_string(logits.size()) + " logits for " +
                         std::to_string(labels.size()) + " labels of " + std::to_string(classes) +
                         " classes");
  }
  if (k == 0 || k > classes) {
    throw ConfigError("topk: k = " + std::to_string(k) + " outside [1, " + std::to_string(classes) + "]");
  }
  std::size_t hits = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const std::size_t label = labels[r];
    if (label >= classes) throw IndexError("topk: label " + std::to_string(label) + " out of range");
    const double* row = logits.data() + r * classes;
    std::size_t rank = 0;
    for (std::size_t j = 0; j < classes; ++j) {
      if (row[j] > row[label] || (row[j] == row[label] && j < label)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return hits;
}

double topk_accuracy(const Tensor& logits, std::span<const std::size_t> labels, std::size_t k) {
  if (logits.dim() != 2) throw DimensionError("topk_accuracy expects [B x c] logits");
  if (labels.empty()) return 0.0;
  return static_cast<double>(topk_hits(logits.data(), logits.extent(1), labels, k)) /
         static_cast<double>(labels.size());
}

std::string format_number(double value) {
  if (!std::isfinite(value)) return std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 9);
  return std::string(buf, res.ptr);
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

}  // namespace

std::string metrics_header(bool extended) {
  std::string h = "epoch,ls,lp,joint,top1,top5,pos_top1,lr,seconds";
  if (extended) h += ",val_ls,val_lp,val_joint,val_top1,val_top5,val_pos_top1";
  return h;
}

std::string metrics_row(const EpochMetrics& m, bool extended) {
  std::string row = std::to_string(m.epoch) + "," + format_number(m.ls) + "," + opt(m.lp) + "," +
                    format_number(m.joint) + "," + format_number(m.top1) + "," +
                    format_number(m.top5) + "," + opt(m.pos_top1) + "," + format_number(m.lr) +
                    "," + format_number(m.seconds);
  if (extended) {
    if (m.val) {
      const EvalMetrics& v = *m.val;
      row += "," + format_number(v.ls) + "," + opt(v.lp) + "," + format_number(v.joint) + "," +
             format_number(v.top1) + "," + format_number(v.top5) + "," + opt(v.pos_top1);
    } else {
      row += ",,,,,,";
    }
  }
  return row;
}

void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> rows, bool extended) {
  out << metrics_header(extended) << '\n';
  for (const EpochMetrics& m : rows) out << metrics_row(m, extended) << '\n';
}

std::string pretrain_header() { return "epoch,recon,lp,joint,pos_top1,lr,seconds"; }

std::string pretrain_row(const PretrainMetrics& m) {
  return std::to_string(m.epoch) + "," + format_number(m.recon) + "," + opt(m.lp) + "," +
         format_number(m.joint) + "," + opt(m.pos_top1) + "," + format_number(m.lr) + "," +
         format_number(m.seconds);
}

void write_pretrain_csv(std::ostream& out, std::span<const PretrainMetrics> rows) {
  out << pretrain_header() << '\n';
  for (const PretrainMetrics& m : rows) out << pretrain_row(m) << '\n';
}

}  // namespace posvit
