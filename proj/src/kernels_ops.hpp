// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace dpc::kern {

// Full kernel set for one backend.
struct Ops {
  float (*dot)(const float*, const float*, std::size_t);
  void (*axpy)(float, const float*, float*, std::size_t);
  void (*vadd)(const float*, const float*, float*, std::size_t);
  void (*vsub)(const float*, const float*, float*, std::size_t);
  void (*vmul)(const float*, const float*, float*, std::size_t);
  void (*vscale)(const float*, float, float*, std::size_t);
  void (*relu)(const float*, float*, std::size_t);
  void (*relu_backward_acc)(const float*, const float*, float*, std::size_t);
  float (*sum)(const float*, std::size_t);
  float (*sumsq)(const float*, std::size_t);
  float (*sqdiff_sum)(const float*, const float*, std::size_t);
  void (*matmul)(const float*, const float*, float*, std::size_t, std::size_t, std::size_t, bool);
};

// nullptr when the host cannot run AVX2+FMA.
const Ops* avx2_ops();

}  // namespace dpc::kern
