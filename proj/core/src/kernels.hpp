// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

namespace posvit::kernels {

// Dense GEMM variants accumulating into C. Every output element sums its
// k-terms in increasing k order, so results do not depend on blocking.
// Leading dimensions are row strides.

/// C[m x n] += A[m x k] . B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc);

/// C[m x n] += A[k x m]^T . B[k x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc);

/// C[m x n] += A[m x k] . B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
             const double* b, std::size_t ldb, double* c, std::size_t ldc);

}  // namespace posvit::kernels
