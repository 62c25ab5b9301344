// SPDX-License-Identifier: Apache-2.0
//
// Minimal dense float tensor with reverse-mode autodiff covering exactly
// the operations the codec and its losses need. Layout is row-major with
// channels first for image-like data (C, H, W).
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "dpc/error.hpp"

namespace dpc {

struct Tensor {
  std::vector<int> shape;
  std::vector<float> values;
  bool requires_grad = false;
  bool needs_grad = false;  // set while recording: participates in backward
  std::vector<float> grad;  // same size as values once allocated

  Tensor() = default;
  explicit Tensor(std::vector<int> s, float fill = 0.0f);

  std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  void ensure_grad();
  void zero_grad();
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false);
TensorPtr make_tensor(std::vector<int> shape, std::vector<float> values,
                      bool requires_grad = false);
TensorPtr make_scalar(float v, bool requires_grad = false);

std::string shape_str(const std::vector<int>& s);
std::int64_t shape_numel(const std::vector<int>& s);

// Tape of recorded operations. Ops execute eagerly; when any input needs a
// gradient the op appends a backward closure. backward() zeroes every
// tracked gradient first, so repeated calls never accumulate across runs.
class Graph {
 public:
  Graph() = default;
  explicit Graph(bool recording) : recording_(recording) {}

  bool recording() const { return recording_; }

  // Registers a node. `out->needs_grad` is derived from the inputs; nodes
  // whose output cannot influence any gradient are dropped.
  void record(const std::vector<TensorPtr>& inputs, const TensorPtr& out,
              std::function<void()> backward_fn);

  void backward(const TensorPtr& loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  void track(const TensorPtr& t);

  struct Node {
    TensorPtr out;
    std::function<void()> fn;
  };
  std::vector<Node> nodes_;
  std::vector<TensorPtr> tracked_;
  std::unordered_set<const Tensor*> seen_;
  bool recording_ = true;
};

// Convenience free function mirroring the module surface.
void backward(Graph& g, const TensorPtr& loss);

// ---- operations ------------------------------------------------------

// input (C,H,W), kernel (O,C,KH,KW), bias (O); zero padding.
TensorPtr conv2d(Graph& g, const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, int stride, int padding);

// Transposed convolution. kernel (I,O,KH,KW) with KH,KW divisible by
// stride; implicit symmetric padding (K-stride)/2 so output dims are
// exactly input * stride.
TensorPtr deconv2d(Graph& g, const TensorPtr& input, const TensorPtr& kernel,
                   const TensorPtr& bias, int stride);

TensorPtr relu(Graph& g, const TensorPtr& x);
TensorPtr add(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr div_elem(Graph& g, const TensorPtr& a, const TensorPtr& b);
// s * x + c
TensorPtr affine(Graph& g, const TensorPtr& x, float s, float c);
TensorPtr scale(Graph& g, const TensorPtr& x, float s);
// x^p elementwise; requires x > 0
TensorPtr pow_scalar(Graph& g, const TensorPtr& x, float p);
// Per spatial position, divide the channel vector by sqrt(sum^2 + 1e-10).
TensorPtr channel_normalize(Graph& g, const TensorPtr& x);
// o[c,...] = w[c] * x[c,...] with w rank-1 of length C.
TensorPtr channel_affine(Graph& g, const TensorPtr& x, const TensorPtr& w);
// (C,H,W) -> (C): average over H,W.
TensorPtr mean_spatial(Graph& g, const TensorPtr& x);
// (C) -> scalar
TensorPtr sum_channels(Graph& g, const TensorPtr& x);
TensorPtr sum_all(Graph& g, const TensorPtr& x);
// (C,H,W) -> (C,floor(H/2),floor(W/2)), 2x2 mean, trailing odd row/col dropped.
TensorPtr avg_pool2(Graph& g, const TensorPtr& x);
// channels [c0, c1) of a (C,...) tensor
TensorPtr slice_channels(Graph& g, const TensorPtr& x, int c0, int c1);
// clamp to [lo, hi]; gradient passes on the closed interval
TensorPtr clamp_range(Graph& g, const TensorPtr& x, float lo, float hi);

// Causal masked 3D convolution over a (F, D, H, W) volume with kernel
// (O, F, KD, KH, KW), stride 1, same padding. Scan order is (h, w, d)
// with d innermost; include_center selects PixelCNN mask type B.
TensorPtr conv3d_masked(Graph& g, const TensorPtr& x, const TensorPtr& kernel,
                        const TensorPtr& bias, bool include_center);

// Gradient-stopped copy (fresh constant tensor with the same values).
TensorPtr detach(const TensorPtr& x);

}  // namespace dpc
