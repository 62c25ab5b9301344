// SPDX-License-Identifier: Apache-2.0
#include "dpc/kernels.hpp"

#include <cstring>

#include "dpc/error.hpp"
#include "kernels_ops.hpp"

namespace dpc::kern {

namespace {

float scalar_dot(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void scalar_axpy(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scalar_vadd(const float* a, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void scalar_vsub(const float* a, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void scalar_vmul(const float* a, const float* b, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scalar_vscale(const float* x, float s, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * s;
}

void scalar_relu(const float* x, float* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void scalar_relu_backward_acc(const float* x, const float* g, float* acc, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > 0.0f) acc[i] += g[i];
}

float scalar_sum(const float* x, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

float scalar_sumsq(const float* x, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

float scalar_sqdiff_sum(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) {
    float d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void scalar_matmul(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    float* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      float av = arow[p];
      if (av == 0.0f) continue;
      const float* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

const Ops kScalarOps = {
    scalar_dot,  scalar_axpy,   scalar_vadd,   scalar_vsub,        scalar_vmul,
    scalar_vscale, scalar_relu, scalar_relu_backward_acc, scalar_sum, scalar_sumsq,
    scalar_sqdiff_sum, scalar_matmul,
};

const Ops* g_active = nullptr;
Backend g_backend = Backend::Auto;

const Ops* resolve(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return &kScalarOps;
    case Backend::Avx2: {
      const Ops* ops = avx2_ops();
      if (!ops) throw ConfigError("avx2 backend requested but not supported on this cpu");
      return ops;
    }
    case Backend::Auto:
    default: {
      const Ops* ops = avx2_ops();
      return ops ? ops : &kScalarOps;
    }
  }
}

const Ops& active() {
  if (!g_active) g_active = resolve(g_backend);
  return *g_active;
}

}  // namespace

void set_backend(Backend b) {
  g_backend = b;
  g_active = resolve(b);
}

Backend active_backend() {
  return &active() == &kScalarOps ? Backend::Scalar : Backend::Avx2;
}

const char* backend_name() {
  return active_backend() == Backend::Scalar ? "scalar" : "avx2";
}

float dot(const float* a, const float* b, std::size_t n) { return active().dot(a, b, n); }
void axpy(float a, const float* x, float* y, std::size_t n) { active().axpy(a, x, y, n); }
void vadd(const float* a, const float* b, float* out, std::size_t n) { active().vadd(a, b, out, n); }
void vsub(const float* a, const float* b, float* out, std::size_t n) { active().vsub(a, b, out, n); }
void vmul(const float* a, const float* b, float* out, std::size_t n) { active().vmul(a, b, out, n); }
void vscale(const float* x, float s, float* out, std::size_t n) { active().vscale(x, s, out, n); }
void relu(const float* x, float* out, std::size_t n) { active().relu(x, out, n); }
void relu_backward_acc(const float* x, const float* g, float* acc, std::size_t n) {
  active().relu_backward_acc(x, g, acc, n);
}
float sum(const float* x, std::size_t n) { return active().sum(x, n); }
float sumsq(const float* x, std::size_t n) { return active().sumsq(x, n); }
float sqdiff_sum(const float* a, const float* b, std::size_t n) {
  return active().sqdiff_sum(a, b, n);
}
void matmul(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n,
            bool accumulate) {
  active().matmul(a, b, c, m, k, n, accumulate);
}

}  // namespace dpc::kern
