// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "kernels.hpp"

#include <vector>

namespace posvit::kernels {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::size_t i = 0;
  // Four output rows at a time share each load of a B row.
  for (; i + 4 <= m; i += 4) {
    double* __restrict c0 = c + (i + 0) * ldc;
    double* __restrict c1 = c + (i + 1) * ldc;
    double* __restrict c2 = c + (i + 2) * ldc;
    double* __restrict c3 = c + (i + 3) * ldc;
    const double* a0 = a + (i + 0) * lda;
    const double* a1 = a + (i + 1) * lda;
    const double* a2 = a + (i + 2) * lda;
    const double* a3 = a + (i + 3) * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double* __restrict brow = b + p * ldb;
      const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
      for (std::size_t j = 0; j < n; ++j) {
        const double bj = brow[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    double* __restrict crow = c + i * ldc;
    const double* arow = a + i * lda;
    for (std::size_t p = 0; p < k; ++p) {
      const double* __restrict brow = b + p * ldb;
      const double v = arow[p];
      for (std::size_t j = 0; j < n; ++j) crow[j] += v * brow[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  // Transpose A once so the main kernel sees contiguous rows.
  std::vector<double> at(m * k);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) at[i * k + p] = a[p * lda + i];
  }
  gemm_nn(m, n, k, at.data(), k, b, ldb, c, ldc);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * ldb + p];
  }
  gemm_nn(m, n, k, a, lda, bt.data(), n, c, ldc);
}

}  // namespace posvit::kernels
