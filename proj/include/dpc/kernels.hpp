// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel inner loops for the codec: scalar reference kernels plus
// AVX2/FMA variants selected at runtime. Elementwise kernels produce
// bit-identical results across backends; reductions and matmul may differ
// by float summation order and are equivalence-tested under tolerance.
#pragma once

#include <cstddef>

namespace dpc::kern {

enum class Backend { Auto, Scalar, Avx2 };

// Selects the kernel set. Auto probes the CPU once; Avx2 throws if the
// host lacks AVX2+FMA. Intended for startup/tests, not concurrent use.
void set_backend(Backend b);
Backend active_backend();
const char* backend_name();

float dot(const float* a, const float* b, std::size_t n);
// y += a * x
void axpy(float a, const float* x, float* y, std::size_t n);
void vadd(const float* a, const float* b, float* out, std::size_t n);
void vsub(const float* a, const float* b, float* out, std::size_t n);
void vmul(const float* a, const float* b, float* out, std::size_t n);
void vscale(const float* x, float s, float* out, std::size_t n);
void relu(const float* x, float* out, std::size_t n);
// acc += g where x > 0
void relu_backward_acc(const float* x, const float* g, float* acc, std::size_t n);
float sum(const float* x, std::size_t n);
float sumsq(const float* x, std::size_t n);
float sqdiff_sum(const float* a, const float* b, std::size_t n);

// Row-major C(m,n) = A(m,k) * B(k,n), accumulating into C when accumulate.
void matmul(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate);

}  // namespace dpc::kern
