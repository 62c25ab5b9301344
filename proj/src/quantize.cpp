// SPDX-License-Identifier: Apache-2.0
#include "dpc/quantize.hpp"

#include <cmath>

#include "dpc/kernels.hpp"

namespace dpc {

Centers Centers::default_centers() {
  return Centers{{-2.0f, -1.0f, 0.0f, 1.0f, 2.0f, 3.0f}};
}

void Centers::validate() const {
  if (values.size() < 2) throw ConfigError("centers: need at least 2 centers");
  for (std::size_t i = 1; i < values.size(); ++i)
    if (!(values[i] > values[i - 1]))
      throw ConfigError("centers: values must be strictly increasing");
}

std::size_t SymbolCube::coded_count() const {
  std::size_t n = 0;
  for (auto c : mask_counts) n += c;
  return n;
}

int nearest_center(float v, const Centers& centers) {
  int best = 0;
  float bestd = std::fabs(v - centers.values[0]);
  for (int j = 1; j < centers.count(); ++j) {
    float dj = std::fabs(v - centers.values[j]);
    if (dj < bestd) {
      bestd = dj;
      best = j;
    }
  }
  return best;
}

SymbolCube quantize_hard(const Tensor& q, const Centers& centers,
                         const std::vector<std::uint8_t>& mask_counts, Tensor* values) {
  centers.validate();
  if (q.rank() != 3) throw DimensionError("quantize_hard: latents must be (K,H,W), got " +
                                          shape_str(q.shape));
  SymbolCube cube;
  cube.channels = q.dim(0);
  cube.height = q.dim(1);
  cube.width = q.dim(2);
  std::size_t plane = cube.plane();
  if (!mask_counts.empty() && mask_counts.size() != plane)
    throw DimensionError("quantize_hard: mask plane size mismatch");
  cube.mask_counts = mask_counts.empty()
                         ? std::vector<std::uint8_t>(plane, static_cast<std::uint8_t>(cube.channels))
                         : mask_counts;
  cube.indices.assign(cube.volume(), 0);
  if (values) *values = Tensor(q.shape);

  for (std::size_t p = 0; p < plane; ++p) {
    int kept = cube.mask_counts[p];
    for (int k = 0; k < cube.channels; ++k) {
      std::size_t i = static_cast<std::size_t>(k) * plane + p;
      if (k < kept) {
        int idx = nearest_center(q.values[i], centers);
        cube.indices[i] = static_cast<std::uint8_t>(idx);
        if (values) values->values[i] = centers.values[idx];
      } else if (values) {
        values->values[i] = 0.0f;
      }
    }
  }
  return cube;
}

Tensor dequantize(const SymbolCube& symbols, const Centers& centers) {
  centers.validate();
  Tensor out({symbols.channels, symbols.height, symbols.width});
  std::size_t plane = symbols.plane();
  for (std::size_t p = 0; p < plane; ++p) {
    int kept = symbols.mask_counts[p];
    if (kept > symbols.channels) throw DataError("dequantize: mask count exceeds channels");
    for (int k = 0; k < kept; ++k) {
      std::size_t i = static_cast<std::size_t>(k) * plane + p;
      if (symbols.indices[i] >= centers.count())
        throw DataError("dequantize: symbol index " + std::to_string(symbols.indices[i]) +
                        " out of range for " + std::to_string(centers.count()) + " centers");
      out.values[i] = centers.values[symbols.indices[i]];
    }
  }
  return out;
}

TensorPtr quantize_soft(Graph& g, const TensorPtr& q, const Centers& centers, float sigma) {
  centers.validate();
  if (!(sigma > 0.0f)) throw ConfigError("quantize_soft: sigma must be > 0");
  int l = centers.count();
  auto out = make_tensor(q->shape);
  std::size_t n = q->values.size();
  // cache the softmax-weighted derivative for backward
  auto deriv = std::make_shared<std::vector<float>>(n);
  std::vector<float> p(static_cast<std::size_t>(l));
  for (std::size_t i = 0; i < n; ++i) {
    float v = q->values[i];
    float amax = -1e30f;
    for (int j = 0; j < l; ++j) {
      float dj = v - centers.values[j];
      float aj = -sigma * dj * dj;
      p[j] = aj;
      if (aj > amax) amax = aj;
    }
    float z = 0.0f;
    for (int j = 0; j < l; ++j) {
      p[j] = std::exp(p[j] - amax);
      z += p[j];
    }
    float mean_c = 0.0f, mean_a = 0.0f;
    for (int j = 0; j < l; ++j) {
      p[j] /= z;
      mean_c += p[j] * centers.values[j];
      mean_a += p[j] * (-2.0f * sigma * (v - centers.values[j]));
    }
    float cov = 0.0f;
    for (int j = 0; j < l; ++j)
      cov += p[j] * centers.values[j] * (-2.0f * sigma * (v - centers.values[j]) - mean_a);
    out->values[i] = mean_c;
    (*deriv)[i] = cov;
  }
  g.record({q}, out, [q, out, deriv] {
    std::size_t n2 = out->grad.size();
    for (std::size_t i = 0; i < n2; ++i) q->grad[i] += out->grad[i] * (*deriv)[i];
  });
  return out;
}

TensorPtr quantize_st(Graph& g, const TensorPtr& q, const Centers& centers) {
  centers.validate();
  auto out = make_tensor(q->shape);
  std::size_t n = q->values.size();
  for (std::size_t i = 0; i < n; ++i)
    out->values[i] = centers.values[nearest_center(q->values[i], centers)];
  g.record({q}, out, [q, out] {
    kern::axpy(1.0f, out->grad.data(), q->grad.data(), out->grad.size());
  });
  return out;
}

}  // namespace dpc
