// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "kernels.hpp"
#include "node.hpp"
#include "posvit/errors.hpp"

namespace posvit {

using detail::make_result;
using detail::Node;

namespace {

void require_2d(const Tensor& t, const char* op) {
  if (t.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a 2D tensor, got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes differ: " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_axis(const Tensor& t, std::size_t axis, const char* op) {
  if (axis >= t.dim()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_string(t.shape()));
  }
}

// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void accumulate(Node& target, std::span<const double> g) {
  if (!target.requires_grad) return;
  auto buf = target.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  if (b.extent(0) != k) {
    throw DimensionError("matmul: inner extents differ: " + shape_string(a.shape()) + " . " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  kernels::gemm_nn(m, n, k, a.data().data(), k, b.data().data(), n, out.data(), n);
  return make_result({m, n}, std::move(out), {&a, &b},
                     [m, n, k](Node& self) {
                       Node& na = self.input(0);
                       Node& nb = self.input(1);
                       if (na.requires_grad) {
                         kernels::gemm_nt(m, k, n, self.grad.data(), n, nb.data.data(), n,
                                          na.grad_buffer().data(), k);
                       }
                       if (nb.requires_grad) {
                         kernels::gemm_tn(k, n, m, na.data.data(), k, self.grad.data(), n,
                                          nb.grad_buffer().data(), n);
                       }
                     },
                     "matmul");
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.extent(0), n = a.extent(1);
  std::vector<double> out(m * n);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  }
  return make_result({n, m}, std::move(out), {&a},
                     [m, n](Node& self) {
                       Node& na = self.input(0);
                       auto g = na.grad_buffer();
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
                       }
                     },
                     "transpose");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {&x},
                     [](Node& self) { accumulate(self.input(0), self.grad); }, "reshape");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [](Node& self) {
                       accumulate(self.input(0), self.grad);
                       accumulate(self.input(1), self.grad);
                     },
                     "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [](Node& self) {
                       accumulate(self.input(0), self.grad);
                       Node& nb = self.input(1);
                       if (nb.requires_grad) {
                         auto g = nb.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                       }
                     },
                     "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [](Node& self) {
                       Node& na = self.input(0);
                       Node& nb = self.input(1);
                       if (na.requires_grad) {
                         auto g = na.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.data[i];
                       }
                       if (nb.requires_grad) {
                         auto g = nb.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.data[i];
                       }
                     },
                     "mul");
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {&a},
                     [factor](Node& self) {
                       auto g = self.input(0).grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
                     },
                     "scale");
}

Tensor add_broadcast(const Tensor& x, const Tensor& pattern) {
  const std::size_t n = x.numel(), p = pattern.numel();
  if (n % p != 0) {
    throw DimensionError("add_broadcast: pattern " + shape_string(pattern.shape()) +
                         " does not tile " + shape_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto pat = pattern.data();
  for (std::size_t i = 0; i < n; ++i) out[i] += pat[i % p];
  return make_result(x.shape(), std::move(out), {&x, &pattern},
                     [n, p](Node& self) {
                       accumulate(self.input(0), self.grad);
                       Node& np = self.input(1);
                       if (np.requires_grad) {
                         auto g = np.grad_buffer();
                         for (std::size_t t = 0; t < n; t += p) {
                           for (std::size_t j = 0; j < p; ++j) g[j] += self.grad[t + j];
                         }
                       }
                     },
                     "add_broadcast");
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (b.numel() != w.extent(1) || w.dim() != 2) {
    throw DimensionError("linear: bias " + shape_string(b.shape()) + " does not match weight " +
                         shape_string(w.shape()));
  }
  return add_broadcast(matmul(x, w), b);
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({1}, {total}, {&x},
                     [](Node& self) {
                       const double g0 = self.grad[0];
                       auto g = self.input(0).grad_buffer();
                       for (double& v : g) v += g0;
                     },
                     "sum");
}

Tensor mean(const Tensor& x) {
  const double count = static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({1}, {total / count}, {&x},
                     [count](Node& self) {
                       const double g0 = self.grad[0] / count;
                       auto g = self.input(0).grad_buffer();
                       for (double& v : g) v += g0;
                     },
                     "mean");
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require_axis(x, axis, "softmax");
  const AxisSplit s = split_axis(x.shape(), axis);
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t r = 0; r < s.inner; ++r) {
      const std::size_t base = o * s.extent * s.inner + r;
      double mx = in[base];
      for (std::size_t c = 1; c < s.extent; ++c) mx = std::max(mx, in[base + c * s.inner]);
      double z = 0.0;
      for (std::size_t c = 0; c < s.extent; ++c) {
        const double e = std::exp(in[base + c * s.inner] - mx);
        out[base + c * s.inner] = e;
        z += e;
      }
      for (std::size_t c = 0; c < s.extent; ++c) out[base + c * s.inner] /= z;
    }
  }
  return make_result(x.shape(), std::move(out), {&x},
                     [s](Node& self) {
                       auto g = self.input(0).grad_buffer();
                       const auto& y = self.data;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t r = 0; r < s.inner; ++r) {
                           const std::size_t base = o * s.extent * s.inner + r;
                           double dot = 0.0;
                           for (std::size_t c = 0; c < s.extent; ++c) {
                             const std::size_t i = base + c * s.inner;
                             dot += y[i] * self.grad[i];
                           }
                           for (std::size_t c = 0; c < s.extent; ++c) {
                             const std::size_t i = base + c * s.inner;
                             g[i] += y[i] * (self.grad[i] - dot);
                           }
                         }
                       }
                     },
                     "softmax");
}

Tensor gelu(const Tensor& x) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double v = in[i];
    const double t = std::tanh(kSqrt2OverPi * (v + kGeluC * v * v * v));
    out[i] = 0.5 * v * (1.0 + t);
  }
  return make_result(x.shape(), std::move(out), {&x},
                     [](Node& self) {
                       Node& nx = self.input(0);
                       auto g = nx.grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double v = nx.data[i];
                         const double t = std::tanh(kSqrt2OverPi * (v + kGeluC * v * v * v));
                         const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
                         const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                         g[i] += self.grad[i] * d;
                       }
                     },
                     "gelu");
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.dim() == 0) throw DimensionError("layernorm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layernorm: gamma/beta " + shape_string(gamma.shape()) + "/" +
                         shape_string(beta.shape()) + " do not match last extent of " +
                         shape_string(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto in = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  std::vector<double> out(in.size());
  std::vector<double> xhat(in.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * rs;
      xhat[r * d + j] = h;
      out[r * d + j] = gm[j] * h + bt[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {&x, &gamma, &beta},
      [d, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        Node& nx = self.input(0);
        Node& ng = self.input(1);
        Node& nb = self.input(2);
        if (ng.requires_grad) {
          auto g = ng.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j] * xhat[r * d + j];
          }
        }
        if (nb.requires_grad) {
          auto g = nb.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
          }
        }
        if (nx.requires_grad) {
          auto g = nx.grad_buffer();
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = self.grad[r * d + j] * ng.data[j];
              mean_dh += dh;
              mean_dh_h += dh * xhat[r * d + j];
            }
            mean_dh *= inv_d;
            mean_dh_h *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = self.grad[r * d + j] * ng.data[j];
              g[r * d + j] += rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_h);
            }
          }
        }
      },
      "layernorm");
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_2d(logits, "cross_entropy");
  const std::size_t batch = logits.extent(0), classes = logits.extent(1);
  if (labels.size() != batch) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(batch) + " rows");
  }
  const auto in = logits.data();
  std::vector<double> probs(in.size());
  std::vector<std::size_t> targets(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (targets[b] >= classes) {
      throw IndexError("cross_entropy: label " + std::to_string(targets[b]) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    const double* row = in.data() + b * classes;
    double mx = row[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = std::exp(row[c] - mx);
      probs[b * classes + c] = e;
      z += e;
    }
    for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] /= z;
    total += (mx + std::log(z)) - row[targets[b]];
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  return make_result({1}, {total * inv_batch}, {&logits},
                     [batch, classes, inv_batch, probs = std::move(probs),
                      targets = std::move(targets)](Node& self) {
                       auto g = self.input(0).grad_buffer();
                       const double g0 = self.grad[0] * inv_batch;
                       for (std::size_t b = 0; b < batch; ++b) {
                         for (std::size_t c = 0; c < classes; ++c) {
                           const double onehot = c == targets[b] ? 1.0 : 0.0;
                           g[b * classes + c] += g0 * (probs[b * classes + c] - onehot);
                         }
                       }
                     },
                     "cross_entropy");
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  require_axis(parts[0], axis, "concat");
  Shape out_shape = parts[0].shape();
  std::size_t total_extent = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool compatible = s.size() == out_shape.size();
    for (std::size_t i = 0; compatible && i < s.size(); ++i) {
      if (i != axis && s[i] != out_shape[i]) compatible = false;
    }
    if (!compatible) {
      throw DimensionError("concat: " + shape_string(s) + " incompatible with " +
                           shape_string(parts[0].shape()) + " along axis " +
                           std::to_string(axis));
    }
    total_extent += s[axis];
  }
  out_shape[axis] = total_extent;
  const AxisSplit os = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> chunks;  // per-part contiguous chunk length
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t chunk = p.extent(axis) * os.inner;
    const auto src = p.data();
    for (std::size_t o = 0; o < os.outer; ++o) {
      std::copy_n(src.data() + o * chunk, chunk,
                  out.data() + o * total_extent * os.inner + off);
    }
    chunks.push_back(chunk);
    offsets.push_back(off);
    off += chunk;
  }
  const std::size_t row = total_extent * os.inner;
  return make_result(std::move(out_shape), std::move(out), parts,
                     [outer = os.outer, row, chunks, offsets](Node& self) {
                       for (std::size_t p = 0; p < chunks.size(); ++p) {
                         Node& np = self.input(p);
                         if (!np.requires_grad) continue;
                         auto g = np.grad_buffer();
                         for (std::size_t o = 0; o < outer; ++o) {
                           const double* src = self.grad.data() + o * row + offsets[p];
                           double* dst = g.data() + o * chunks[p];
                           for (std::size_t i = 0; i < chunks[p]; ++i) dst[i] += src[i];
                         }
                       }
                     },
                     "concat");
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  const Tensor parts[] = {a, b};
  return concat(std::span<const Tensor>(parts), axis);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_axis(x, axis, "slice");
  if (begin >= end || end > x.extent(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for extent " + std::to_string(x.extent(axis)) + " of " +
                         shape_string(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * s.inner;
  const std::size_t row = s.extent * s.inner;
  const std::size_t start = begin * s.inner;
  std::vector<double> out(s.outer * chunk);
  const auto src = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(src.data() + o * row + start, chunk, out.data() + o * chunk);
  }
  return make_result(std::move(out_shape), std::move(out), {&x},
                     [outer = s.outer, chunk, row, start](Node& self) {
                       auto g = self.input(0).grad_buffer();
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t i = 0; i < chunk; ++i) {
                           g[o * row + start + i] += self.grad[o * chunk + i];
                         }
                       }
                     },
                     "slice");
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_2d(x, "gather_rows");
  const std::size_t n_rows = x.extent(0), cols = x.extent(1);
  if (rows.empty()) throw DimensionError("gather_rows: empty row list");
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * cols);
  const auto src = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n_rows) {
      throw IndexError("gather_rows: row " + std::to_string(idx[r]) + " outside [0, " +
                       std::to_string(n_rows) + ")");
    }
    std::copy_n(src.data() + idx[r] * cols, cols, out.data() + r * cols);
  }
  const std::size_t count = idx.size();
  return make_result({count, cols}, std::move(out), {&x},
                     [cols, idx = std::move(idx)](Node& self) {
                       auto g = self.input(0).grad_buffer();
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         double* dst = g.data() + idx[r] * cols;
                         const double* src = self.grad.data() + r * cols;
                         for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                       }
                     },
                     "gather_rows");
}

}  // namespace posvit
