// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "posvit/errors.hpp"

namespace posvit {

namespace {

double evaluate(const std::function<Tensor()>& loss) {
  const double v = loss().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: loss evaluated to a non-finite value");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& loss, std::span<Tensor> params,
                           double h, std::size_t sample_count, Rng& rng) {
  if (!(h > 0.0)) throw ConfigError("grad_check: step h must be positive");
  if (sample_count == 0) throw ConfigError("grad_check: sample_count must be at least 1");
  if (params.empty()) throw ConfigError("grad_check: no parameters");

  for (Tensor& p : params) p.zero_grad();
  Tensor l = loss();
  if (!std::isfinite(l.item())) throw NumericError("grad_check: loss is non-finite");
  backward(l);

  std::vector<std::vector<double>> analytic;
  std::vector<std::size_t> cumulative;
  std::size_t total = 0;
  for (Tensor& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
    total += p.numel();
    cumulative.push_back(total);
  }

  GradCheckReport report;
  report.coordinates = sample_count;
  for (std::size_t s = 0; s < sample_count; ++s) {
    const std::size_t flat = rng.below(total);
    const std::size_t pi = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), flat) - cumulative.begin());
    const std::size_t idx = flat - (pi == 0 ? 0 : cumulative[pi - 1]);
    auto values = params[pi].mutable_data();
    const double original = values[idx];
    values[idx] = original + h;
    const double f_plus = evaluate(loss);
    values[idx] = original - h;
    const double f_minus = evaluate(loss);
    values[idx] = original;

    const double numeric = (f_plus - f_minus) / (2.0 * h);
    const double a = analytic[pi][idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_rel_error || s == 0) {
      report.max_rel_error = std::max(report.max_rel_error, rel);
      report.worst_param = pi;
      report.worst_index = idx;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  for (Tensor& p : params) p.zero_grad();
  return report;
}

}  // namespace posvit
