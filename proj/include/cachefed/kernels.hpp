// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cachefed/numerics.hpp"

// Dense GEMM variants in two flavors. `serial` is the reference: plain loops
// that stay the oracle in tests. `parallel` splits output rows across OpenMP
// threads; each output entry still accumulates in the same order, so both
// flavors are bit-identical.
//
// Output buffers must be pre-sized; shapes are checked by the callers in
// numerics.cpp.
namespace cachefed::kernels {

namespace serial {
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out);
void softmax_rows(const Matrix& m, Matrix& out);
}  // namespace serial

namespace parallel {
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& out);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& out);
void softmax_rows(const Matrix& m, Matrix& out);
}  // namespace parallel

// Number of threads the parallel kernels and the round loop may use.
int max_threads();
// Caps parallelism. 0 restores the OpenMP default.
void set_max_threads(int n);

}  // namespace cachefed::kernels
