// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "posvit/tensor.hpp"

namespace posvit {

// Differentiable tensor operations. Every op records itself on the graph when
// any input requires a gradient. Reductions always run in a fixed sequential
// order so results are bit-reproducible.

/// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Same values under a new shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Adds `pattern` tiled over `x` in row-major order. `pattern.numel()` must
/// divide `x.numel()`: a bias [n] over [m x n], or per-position encodings
/// [T x D] over a batch [B*T x D].
Tensor add_broadcast(const Tensor& x, const Tensor& pattern);

/// x . w + b for x [m x k], w [k x n], b [n].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
/// Tanh approximation of GELU; the backward pass differentiates the same form.
Tensor gelu(const Tensor& x);
/// Normalizes over the last axis then applies gamma/beta of that extent.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-6);

/// Mean over rows of -log softmax(logits)[label]. logits [B x c].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// Elements [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Rows of a 2D tensor, in the given order; indices may repeat.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Multi-head scaled dot-product self-attention over `batch` independent
/// sequences. qkv is [batch*T x 3D] holding queries, keys and values side by
/// side; the result is [batch*T x D] with heads concatenated.
Tensor multi_head_attention(const Tensor& qkv, std::size_t batch, std::size_t heads);

/// Attention probabilities computed by `multi_head_attention`, laid out
/// [batch][head][query][key]. Not differentiable; for inspection and tests.
std::vector<double> attention_probabilities(const Tensor& qkv, std::size_t batch,
                                            std::size_t heads);

}  // namespace posvit
