// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <string>

#include "kernels.hpp"
#include "node.hpp"
#include "posvit/errors.hpp"
#include "posvit/ops.hpp"

namespace posvit {

namespace {

struct AttentionDims {
  std::size_t batch, tokens, heads, width, head_width;
};

AttentionDims attention_dims(const Tensor& qkv, std::size_t batch, std::size_t heads) {
  if (qkv.dim() != 2 || qkv.extent(1) % 3 != 0) {
    throw DimensionError("multi_head_attention: qkv must be [rows x 3D], got " +
                         shape_string(qkv.shape()));
  }
  const std::size_t rows = qkv.extent(0), width = qkv.extent(1) / 3;
  if (batch == 0 || rows % batch != 0) {
    throw DimensionError("multi_head_attention: " + std::to_string(rows) +
                         " rows do not split into batch " + std::to_string(batch));
  }
  if (heads == 0 || width % heads != 0) {
    throw DimensionError("multi_head_attention: width " + std::to_string(width) +
                         " not divisible by " + std::to_string(heads) + " heads");
  }
  return {batch, rows / batch, heads, width, width / heads};
}

// Row-wise softmax of a [t x t] score block, in place.
void softmax_rows(double* s, std::size_t t) {
  for (std::size_t i = 0; i < t; ++i) {
    double* row = s + i * t;
    const double mx = *std::max_element(row, row + t);
    double z = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < t; ++j) row[j] /= z;
  }
}

// Fills probs[b][h] ([t x t] each) from the packed qkv rows.
void compute_probabilities(const AttentionDims& d, const double* qkv, double* probs) {
  const std::size_t ld = 3 * d.width, t = d.tokens;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d.head_width));
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* base = qkv + b * t * ld;
    for (std::size_t h = 0; h < d.heads; ++h) {
      double* p = probs + (b * d.heads + h) * t * t;
      std::fill(p, p + t * t, 0.0);
      kernels::gemm_nt(t, t, d.head_width, base + h * d.head_width, ld,
                       base + d.width + h * d.head_width, ld, p, t);
      for (std::size_t i = 0; i < t * t; ++i) p[i] *= scale;
      softmax_rows(p, t);
    }
  }
}

}  // namespace

std::vector<double> attention_probabilities(const Tensor& qkv, std::size_t batch,
                                            std::size_t heads) {
  const AttentionDims d = attention_dims(qkv, batch, heads);
  std::vector<double> probs(d.batch * d.heads * d.tokens * d.tokens);
  compute_probabilities(d, qkv.data().data(), probs.data());
  return probs;
}

Tensor multi_head_attention(const Tensor& qkv, std::size_t batch, std::size_t heads) {
  const AttentionDims d = attention_dims(qkv, batch, heads);
  const std::size_t ld = 3 * d.width, t = d.tokens;
  std::vector<double> probs(d.batch * d.heads * t * t);
  compute_probabilities(d, qkv.data().data(), probs.data());

  std::vector<double> out(d.batch * t * d.width, 0.0);
  const double* in = qkv.data().data();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t h = 0; h < d.heads; ++h) {
      const double* p = probs.data() + (b * d.heads + h) * t * t;
      kernels::gemm_nn(t, d.head_width, t, p, t, in + b * t * ld + 2 * d.width + h * d.head_width,
                       ld, out.data() + b * t * d.width + h * d.head_width, d.width);
    }
  }

  return detail::make_result(
      {d.batch * t, d.width}, std::move(out), {&qkv},
      [d, probs = std::move(probs)](detail::Node& self) {
        detail::Node& nq = self.input(0);
        const std::size_t ld = 3 * d.width, t = d.tokens, hw = d.head_width;
        const double scale = 1.0 / std::sqrt(static_cast<double>(hw));
        auto gq = nq.grad_buffer();
        std::vector<double> dp(t * t);
        for (std::size_t b = 0; b < d.batch; ++b) {
          const double* x = nq.data.data() + b * t * ld;
          double* gx = gq.data() + b * t * ld;
          const double* dout = self.grad.data() + b * t * d.width;
          for (std::size_t h = 0; h < d.heads; ++h) {
            const double* p = probs.data() + (b * d.heads + h) * t * t;
            const double* q = x + h * hw;
            const double* k = x + d.width + h * hw;
            const double* v = x + 2 * d.width + h * hw;
            const double* dO = dout + h * hw;
            // dV += P^T dO
            kernels::gemm_tn(t, hw, t, p, t, dO, d.width, gx + 2 * d.width + h * hw, ld);
            // dP = dO V^T
            std::fill(dp.begin(), dp.end(), 0.0);
            kernels::gemm_nt(t, t, hw, dO, d.width, v, ld, dp.data(), t);
            // dS = scale * P (dP - rowsum(P dP))
            for (std::size_t i = 0; i < t; ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j < t; ++j) dot += p[i * t + j] * dp[i * t + j];
              for (std::size_t j = 0; j < t; ++j) {
                dp[i * t + j] = scale * p[i * t + j] * (dp[i * t + j] - dot);
              }
            }
            // dQ += dS K, dK += dS^T Q
            kernels::gemm_nn(t, hw, t, dp.data(), t, k, ld, gx + h * hw, ld);
            kernels::gemm_tn(t, hw, t, dp.data(), t, q, ld, gx + d.width + h * hw, ld);
          }
        }
      },
      "multi_head_attention");
}

}  // namespace posvit
