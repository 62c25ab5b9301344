// SPDX-License-Identifier: Apache-2.0
//
// Scalar quantization of latents onto a small fixed center alphabet.
// Hard nearest-neighbor assignment feeds the coder; a softmax relaxation
// and a straight-through variant serve training.
#pragma once

#include <cstdint>
#include <vector>

#include "dpc/tensor.hpp"

namespace dpc {

struct Centers {
  std::vector<float> values;  // strictly increasing, length >= 2

  static Centers default_centers();  // 6 centers evenly spaced on [-2, 3]
  int count() const { return static_cast<int>(values.size()); }
  void validate() const;
};

// Quantized latent volume. indices are stored densely for all (K,H,W)
// positions; entries at masked positions are 0 and never coded.
struct SymbolCube {
  int channels = 0;  // K
  int height = 0;    // H/8
  int width = 0;     // W/8
  std::vector<std::uint8_t> indices;  // K*H*W, each < L at unmasked positions
  std::vector<std::uint8_t> mask_counts;  // H*W, channels kept per location

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  std::size_t volume() const { return static_cast<std::size_t>(channels) * plane(); }
  // coded symbol count = sum of mask_counts
  std::size_t coded_count() const;
};

// Nearest-center assignment; exact midpoints break toward the lower index.
// mask_counts (may be empty for "all kept") selects which leading channels
// of each location carry symbols. Returns the cube and writes the chosen
// center values into `values` when non-null.
SymbolCube quantize_hard(const Tensor& q, const Centers& centers,
                         const std::vector<std::uint8_t>& mask_counts = {},
                         Tensor* values = nullptr);

int nearest_center(float v, const Centers& centers);

// Unmasked positions map to their center value, masked positions to 0.
Tensor dequantize(const SymbolCube& symbols, const Centers& centers);

// Differentiable relaxation: out_i = sum_j c_j softmax_j(-sigma (q_i-c_j)^2).
TensorPtr quantize_soft(Graph& g, const TensorPtr& q, const Centers& centers, float sigma);

// Hard forward values with identity backward.
TensorPtr quantize_st(Graph& g, const TensorPtr& q, const Centers& centers);

}  // namespace dpc
