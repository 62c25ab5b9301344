// SPDX-License-Identifier: Apache-2.0
//
// AVX2/FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; everything here stays behind the runtime cpu check in
// avx2_ops().
#include "kernels_ops.hpp"

#include <cstring>

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>

namespace dpc::kern {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

float avx2_dot(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void avx2_axpy(float a, const float* x, float* y, std::size_t n) {
  __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vy = _mm256_loadu_ps(y + i);
    vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vy);
    _mm256_storeu_ps(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void avx2_vadd(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void avx2_vsub(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void avx2_vmul(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void avx2_vscale(const float* x, float s, float* out, std::size_t n) {
  __m256 vs = _mm256_set1_ps(s);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), vs));
  for (; i < n; ++i) out[i] = x[i] * s;
}

void avx2_relu(const float* x, float* out, std::size_t n) {
  __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void avx2_relu_backward_acc(const float* x, const float* g, float* acc, std::size_t n) {
  __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    __m256 gm = _mm256_and_ps(_mm256_loadu_ps(g + i), mask);
    _mm256_storeu_ps(acc + i, _mm256_add_ps(_mm256_loadu_ps(acc + i), gm));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0f) acc[i] += g[i];
}

float avx2_sum(const float* x, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(x + i));
  float acc = hsum(acc0);
  for (; i < n; ++i) acc += x[i];
  return acc;
}

float avx2_sumsq(const float* x, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 v = _mm256_loadu_ps(x + i);
    acc0 = _mm256_fmadd_ps(v, v, acc0);
  }
  float acc = hsum(acc0);
  for (; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

float avx2_sqdiff_sum(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 d = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc0 = _mm256_fmadd_ps(d, d, acc0);
  }
  float acc = hsum(acc0);
  for (; i < n; ++i) {
    float d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void avx2_matmul(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                 std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      float av = arow[p];
      if (av == 0.0f) continue;
      const float* brow = b + p * n;
      __m256 va = _mm256_set1_ps(av);
      std::size_t j = 0;
      for (; j + 16 <= n; j += 16) {
        __m256 c0 = _mm256_loadu_ps(crow + j);
        __m256 c1 = _mm256_loadu_ps(crow + j + 8);
        c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), c0);
        c1 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j + 8), c1);
        _mm256_storeu_ps(crow + j, c0);
        _mm256_storeu_ps(crow + j + 8, c1);
      }
      for (; j + 8 <= n; j += 8) {
        __m256 c0 = _mm256_loadu_ps(crow + j);
        c0 = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), c0);
        _mm256_storeu_ps(crow + j, c0);
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

const Ops kAvx2Ops = {
    avx2_dot,  avx2_axpy,   avx2_vadd,   avx2_vsub,        avx2_vmul,
    avx2_vscale, avx2_relu, avx2_relu_backward_acc, avx2_sum, avx2_sumsq,
    avx2_sqdiff_sum, avx2_matmul,
};

}  // namespace

const Ops* avx2_ops() {
  static const bool supported =
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &kAvx2Ops : nullptr;
}

}  // namespace dpc::kern

#else  // non-x86

namespace dpc::kern {
const Ops* avx2_ops() { return nullptr; }
}  // namespace dpc::kern

#endif
