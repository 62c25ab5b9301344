// SPDX-License-Identifier: Apache-2.0
#include "dpc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "dpc/kernels.hpp"

namespace dpc {

namespace {

bool wants_grad(const TensorPtr& t) { return t->needs_grad || t->requires_grad; }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
  }
}

// ---- im2col / col2im (2D, zero padding) ------------------------------

void im2col(const float* in, int C, int H, int W, int KH, int KW, int stride, int pad,
            float* col, int OH, int OW) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < KH; ++ky) {
      for (int kx = 0; kx < KW; ++kx) {
        float* row = col + ((static_cast<std::size_t>(c) * KH + ky) * KW + kx) *
                               static_cast<std::size_t>(OH) * OW;
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride + ky - pad;
          float* dst = row + static_cast<std::size_t>(oy) * OW;
          if (iy < 0 || iy >= H) {
            std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(OW));
            continue;
          }
          const float* src = in + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride + kx - pad;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_acc(const float* col, int C, int H, int W, int KH, int KW, int stride, int pad,
                float* im, int OH, int OW) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < KH; ++ky) {
      for (int kx = 0; kx < KW; ++kx) {
        const float* row = col + ((static_cast<std::size_t>(c) * KH + ky) * KW + kx) *
                                     static_cast<std::size_t>(OH) * OW;
        for (int oy = 0; oy < OH; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          const float* src = row + static_cast<std::size_t>(oy) * OW;
          float* dst = im + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < OW; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// C(m,n) += A(m,k) * B(n,k)^T
void matmul_abt_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += kern::dot(a + i * k, b + j * k, k);
}

// C(m,n) += A(k,m)^T * B(k,n)
void matmul_atb_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const float* arow = a + p * m;
    const float* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      if (arow[i] != 0.0f) kern::axpy(arow[i], brow, c + i * n, n);
    }
  }
}

// ---- im2col / col2im (3D, stride 1, same padding) --------------------

void im2col3(const float* in, int F, int D, int H, int W, int K, float* col) {
  int pad = (K - 1) / 2;
  std::size_t vol = static_cast<std::size_t>(D) * H * W;
  for (int f = 0; f < F; ++f) {
    for (int kd = 0; kd < K; ++kd) {
      for (int kh = 0; kh < K; ++kh) {
        for (int kw = 0; kw < K; ++kw) {
          std::size_t r = ((static_cast<std::size_t>(f) * K + kd) * K + kh) * K + kw;
          float* row = col + r * vol;
          for (int d = 0; d < D; ++d) {
            int id = d + kd - pad;
            for (int h = 0; h < H; ++h) {
              int ih = h + kh - pad;
              float* dst = row + (static_cast<std::size_t>(d) * H + h) * W;
              if (id < 0 || id >= D || ih < 0 || ih >= H) {
                std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(W));
                continue;
              }
              const float* src = in + (static_cast<std::size_t>(f) * D + id) * H * W +
                                 static_cast<std::size_t>(ih) * W;
              for (int w = 0; w < W; ++w) {
                int iw = w + kw - pad;
                dst[w] = (iw >= 0 && iw < W) ? src[iw] : 0.0f;
              }
            }
          }
        }
      }
    }
  }
}

void col2im3_acc(const float* col, int F, int D, int H, int W, int K, float* im) {
  int pad = (K - 1) / 2;
  std::size_t vol = static_cast<std::size_t>(D) * H * W;
  for (int f = 0; f < F; ++f) {
    for (int kd = 0; kd < K; ++kd) {
      for (int kh = 0; kh < K; ++kh) {
        for (int kw = 0; kw < K; ++kw) {
          std::size_t r = ((static_cast<std::size_t>(f) * K + kd) * K + kh) * K + kw;
          const float* row = col + r * vol;
          for (int d = 0; d < D; ++d) {
            int id = d + kd - pad;
            if (id < 0 || id >= D) continue;
            for (int h = 0; h < H; ++h) {
              int ih = h + kh - pad;
              if (ih < 0 || ih >= H) continue;
              const float* src = row + (static_cast<std::size_t>(d) * H + h) * W;
              float* dst = im + (static_cast<std::size_t>(f) * D + id) * H * W +
                           static_cast<std::size_t>(ih) * W;
              for (int w = 0; w < W; ++w) {
                int iw = w + kw - pad;
                if (iw >= 0 && iw < W) dst[iw] += src[w];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

// ---- Tensor ----------------------------------------------------------

Tensor::Tensor(std::vector<int> s, float fill)
    : shape(std::move(s)), values(static_cast<std::size_t>(shape_numel(shape)), fill) {}

void Tensor::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0f);
}

void Tensor::zero_grad() { grad.assign(values.size(), 0.0f); }

std::int64_t shape_numel(const std::vector<int>& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad) {
  auto t = std::make_shared<Tensor>(std::move(shape));
  t->requires_grad = requires_grad;
  if (requires_grad) t->ensure_grad();
  return t;
}

TensorPtr make_tensor(std::vector<int> shape, std::vector<float> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw DimensionError("value count does not match shape " + shape_str(shape));
  auto t = std::make_shared<Tensor>();
  t->shape = std::move(shape);
  t->values = std::move(values);
  t->requires_grad = requires_grad;
  if (requires_grad) t->ensure_grad();
  return t;
}

TensorPtr make_scalar(float v, bool requires_grad) {
  return make_tensor({1}, {v}, requires_grad);
}

// ---- Graph -----------------------------------------------------------

void Graph::track(const TensorPtr& t) {
  if (seen_.insert(t.get()).second) tracked_.push_back(t);
}

void Graph::record(const std::vector<TensorPtr>& inputs, const TensorPtr& out,
                   std::function<void()> backward_fn) {
  bool need = false;
  for (const auto& in : inputs) need = need || wants_grad(in);
  out->needs_grad = need;
  if (!recording_ || !need) return;
  for (const auto& in : inputs)
    if (wants_grad(in)) track(in);
  track(out);
  nodes_.push_back(Node{out, std::move(backward_fn)});
}

void Graph::backward(const TensorPtr& loss) {
  if (loss->size() != 1) throw UsageError("backward requires a scalar loss, got shape " +
                                          shape_str(loss->shape));
  for (const auto& t : tracked_) {
    t->ensure_grad();
    t->zero_grad();
  }
  loss->ensure_grad();
  std::fill(loss->grad.begin(), loss->grad.end(), 0.0f);
  loss->grad[0] = 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
}

void backward(Graph& g, const TensorPtr& loss) { g.backward(loss); }

// ---- elementwise and reduction ops ------------------------------------

TensorPtr relu(Graph& g, const TensorPtr& x) {
  auto out = make_tensor(x->shape);
  kern::relu(x->values.data(), out->values.data(), x->values.size());
  g.record({x}, out, [x, out] {
    kern::relu_backward_acc(x->values.data(), out->grad.data(), x->grad.data(),
                            x->values.size());
  });
  return out;
}

TensorPtr add(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(*a, *b, "add");
  auto out = make_tensor(a->shape);
  kern::vadd(a->values.data(), b->values.data(), out->values.data(), a->values.size());
  g.record({a, b}, out, [a, b, out] {
    std::size_t n = out->grad.size();
    if (wants_grad(a)) kern::axpy(1.0f, out->grad.data(), a->grad.data(), n);
    if (wants_grad(b)) kern::axpy(1.0f, out->grad.data(), b->grad.data(), n);
  });
  return out;
}

TensorPtr sub(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(*a, *b, "sub");
  auto out = make_tensor(a->shape);
  kern::vsub(a->values.data(), b->values.data(), out->values.data(), a->values.size());
  g.record({a, b}, out, [a, b, out] {
    std::size_t n = out->grad.size();
    if (wants_grad(a)) kern::axpy(1.0f, out->grad.data(), a->grad.data(), n);
    if (wants_grad(b)) kern::axpy(-1.0f, out->grad.data(), b->grad.data(), n);
  });
  return out;
}

TensorPtr mul(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(*a, *b, "mul");
  auto out = make_tensor(a->shape);
  kern::vmul(a->values.data(), b->values.data(), out->values.data(), a->values.size());
  g.record({a, b}, out, [a, b, out] {
    std::size_t n = out->grad.size();
    if (wants_grad(a))
      for (std::size_t i = 0; i < n; ++i) a->grad[i] += out->grad[i] * b->values[i];
    if (wants_grad(b))
      for (std::size_t i = 0; i < n; ++i) b->grad[i] += out->grad[i] * a->values[i];
  });
  return out;
}

TensorPtr div_elem(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(*a, *b, "div");
  auto out = make_tensor(a->shape);
  std::size_t n = a->values.size();
  for (std::size_t i = 0; i < n; ++i) out->values[i] = a->values[i] / b->values[i];
  g.record({a, b}, out, [a, b, out] {
    std::size_t n2 = out->grad.size();
    if (wants_grad(a))
      for (std::size_t i = 0; i < n2; ++i) a->grad[i] += out->grad[i] / b->values[i];
    if (wants_grad(b))
      for (std::size_t i = 0; i < n2; ++i)
        b->grad[i] -= out->grad[i] * out->values[i] / b->values[i];
  });
  return out;
}

TensorPtr affine(Graph& g, const TensorPtr& x, float s, float c) {
  auto out = make_tensor(x->shape);
  std::size_t n = x->values.size();
  for (std::size_t i = 0; i < n; ++i) out->values[i] = s * x->values[i] + c;
  g.record({x}, out, [x, out, s] {
    kern::axpy(s, out->grad.data(), x->grad.data(), out->grad.size());
  });
  return out;
}

TensorPtr scale(Graph& g, const TensorPtr& x, float s) { return affine(g, x, s, 0.0f); }

TensorPtr pow_scalar(Graph& g, const TensorPtr& x, float p) {
  auto out = make_tensor(x->shape);
  std::size_t n = x->values.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (x->values[i] <= 0.0f)
      throw DataError("pow_scalar requires strictly positive inputs");
    out->values[i] = std::pow(x->values[i], p);
  }
  g.record({x}, out, [x, out, p] {
    std::size_t n2 = out->grad.size();
    for (std::size_t i = 0; i < n2; ++i)
      x->grad[i] += out->grad[i] * p * out->values[i] / x->values[i];
  });
  return out;
}

TensorPtr channel_normalize(Graph& g, const TensorPtr& x) {
  if (x->rank() < 1 || x->dim(0) < 1)
    throw DimensionError("channel_normalize requires a leading channel axis");
  int c = x->dim(0);
  std::size_t s = x->values.size() / static_cast<std::size_t>(c);
  auto out = make_tensor(x->shape);
  auto norms = std::make_shared<std::vector<float>>(s);
  for (std::size_t j = 0; j < s; ++j) {
    float acc = 1e-10f;
    for (int ch = 0; ch < c; ++ch) {
      float v = x->values[static_cast<std::size_t>(ch) * s + j];
      acc += v * v;
    }
    (*norms)[j] = std::sqrt(acc);
  }
  for (int ch = 0; ch < c; ++ch)
    for (std::size_t j = 0; j < s; ++j) {
      std::size_t i = static_cast<std::size_t>(ch) * s + j;
      out->values[i] = x->values[i] / (*norms)[j];
    }
  g.record({x}, out, [x, out, norms, c, s] {
    for (std::size_t j = 0; j < s; ++j) {
      float gz = 0.0f;
      for (int ch = 0; ch < c; ++ch) {
        std::size_t i = static_cast<std::size_t>(ch) * s + j;
        gz += out->grad[i] * out->values[i];
      }
      float inv = 1.0f / (*norms)[j];
      for (int ch = 0; ch < c; ++ch) {
        std::size_t i = static_cast<std::size_t>(ch) * s + j;
        x->grad[i] += (out->grad[i] - out->values[i] * gz) * inv;
      }
    }
  });
  return out;
}

TensorPtr channel_affine(Graph& g, const TensorPtr& x, const TensorPtr& w) {
  if (x->rank() < 1) throw DimensionError("channel_affine requires a channel axis");
  int c = x->dim(0);
  if (w->rank() != 1 || w->dim(0) != c)
    throw DimensionError("channel_affine: weight length " + shape_str(w->shape) +
                         " does not match channels " + std::to_string(c));
  std::size_t s = x->values.size() / static_cast<std::size_t>(c);
  auto out = make_tensor(x->shape);
  for (int ch = 0; ch < c; ++ch)
    kern::vscale(x->values.data() + static_cast<std::size_t>(ch) * s, w->values[ch],
                 out->values.data() + static_cast<std::size_t>(ch) * s, s);
  g.record({x, w}, out, [x, w, out, c, s] {
    for (int ch = 0; ch < c; ++ch) {
      std::size_t off = static_cast<std::size_t>(ch) * s;
      if (wants_grad(x)) kern::axpy(w->values[ch], out->grad.data() + off, x->grad.data() + off, s);
      if (wants_grad(w))
        w->grad[ch] += kern::dot(out->grad.data() + off, x->values.data() + off, s);
    }
  });
  return out;
}

TensorPtr mean_spatial(Graph& g, const TensorPtr& x) {
  if (x->rank() < 2) throw DimensionError("mean_spatial requires rank >= 2, got " +
                                          shape_str(x->shape));
  int c = x->dim(0);
  std::size_t s = x->values.size() / static_cast<std::size_t>(c);
  auto out = make_tensor({c});
  for (int ch = 0; ch < c; ++ch)
    out->values[ch] = kern::sum(x->values.data() + static_cast<std::size_t>(ch) * s, s) /
                      static_cast<float>(s);
  g.record({x}, out, [x, out, c, s] {
    for (int ch = 0; ch < c; ++ch) {
      float gv = out->grad[ch] / static_cast<float>(s);
      float* dst = x->grad.data() + static_cast<std::size_t>(ch) * s;
      for (std::size_t j = 0; j < s; ++j) dst[j] += gv;
    }
  });
  return out;
}

TensorPtr sum_channels(Graph& g, const TensorPtr& x) {
  if (x->rank() != 1) throw DimensionError("sum_channels expects a per-channel vector, got " +
                                           shape_str(x->shape));
  auto out = make_scalar(kern::sum(x->values.data(), x->values.size()));
  g.record({x}, out, [x, out] {
    float gv = out->grad[0];
    for (auto& gx : x->grad) gx += gv;
  });
  return out;
}

TensorPtr sum_all(Graph& g, const TensorPtr& x) {
  auto out = make_scalar(kern::sum(x->values.data(), x->values.size()));
  g.record({x}, out, [x, out] {
    float gv = out->grad[0];
    for (auto& gx : x->grad) gx += gv;
  });
  return out;
}

TensorPtr avg_pool2(Graph& g, const TensorPtr& x) {
  if (x->rank() != 3) throw DimensionError("avg_pool2 expects (C,H,W), got " + shape_str(x->shape));
  int c = x->dim(0), h = x->dim(1), w = x->dim(2);
  int oh = h / 2, ow = w / 2;
  if (oh < 1 || ow < 1) throw DimensionError("avg_pool2: input too small " + shape_str(x->shape));
  auto out = make_tensor({c, oh, ow});
  for (int ch = 0; ch < c; ++ch) {
    const float* src = x->values.data() + static_cast<std::size_t>(ch) * h * w;
    float* dst = out->values.data() + static_cast<std::size_t>(ch) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx) {
        const float* p = src + (2 * y) * w + 2 * xx;
        dst[y * ow + xx] = 0.25f * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  }
  g.record({x}, out, [x, out, c, h, w, oh, ow] {
    for (int ch = 0; ch < c; ++ch) {
      float* dst = x->grad.data() + static_cast<std::size_t>(ch) * h * w;
      const float* src = out->grad.data() + static_cast<std::size_t>(ch) * oh * ow;
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          float gv = 0.25f * src[y * ow + xx];
          float* p = dst + (2 * y) * w + 2 * xx;
          p[0] += gv;
          p[1] += gv;
          p[w] += gv;
          p[w + 1] += gv;
        }
    }
  });
  return out;
}

TensorPtr slice_channels(Graph& g, const TensorPtr& x, int c0, int c1) {
  if (x->rank() < 1 || c0 < 0 || c1 > x->dim(0) || c0 >= c1)
    throw DimensionError("slice_channels: invalid range [" + std::to_string(c0) + "," +
                         std::to_string(c1) + ") for " + shape_str(x->shape));
  std::vector<int> oshape = x->shape;
  oshape[0] = c1 - c0;
  std::size_t s = x->values.size() / static_cast<std::size_t>(x->dim(0));
  auto out = make_tensor(oshape);
  std::memcpy(out->values.data(), x->values.data() + static_cast<std::size_t>(c0) * s,
              out->values.size() * sizeof(float));
  g.record({x}, out, [x, out, c0, s] {
    kern::axpy(1.0f, out->grad.data(), x->grad.data() + static_cast<std::size_t>(c0) * s,
               out->grad.size());
  });
  return out;
}

TensorPtr clamp_range(Graph& g, const TensorPtr& x, float lo, float hi) {
  auto out = make_tensor(x->shape);
  std::size_t n = x->values.size();
  for (std::size_t i = 0; i < n; ++i) out->values[i] = std::clamp(x->values[i], lo, hi);
  g.record({x}, out, [x, out, lo, hi] {
    std::size_t n2 = out->grad.size();
    for (std::size_t i = 0; i < n2; ++i)
      if (x->values[i] >= lo && x->values[i] <= hi) x->grad[i] += out->grad[i];
  });
  return out;
}

TensorPtr detach(const TensorPtr& x) {
  auto t = std::make_shared<Tensor>();
  t->shape = x->shape;
  t->values = x->values;
  return t;
}

// ---- convolutions ------------------------------------------------------

TensorPtr conv2d(Graph& g, const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, int stride, int padding) {
  if (input->rank() != 3) throw DimensionError("conv2d: input must be (C,H,W), got " +
                                               shape_str(input->shape));
  if (kernel->rank() != 4) throw DimensionError("conv2d: kernel must be (O,I,KH,KW), got " +
                                                shape_str(kernel->shape));
  int c = input->dim(0), h = input->dim(1), w = input->dim(2);
  int o = kernel->dim(0), ci = kernel->dim(1), kh = kernel->dim(2), kw = kernel->dim(3);
  if (ci != c)
    throw DimensionError("conv2d: input channels " + std::to_string(c) +
                         " != kernel input axis " + std::to_string(ci));
  if (bias->rank() != 1 || bias->dim(0) != o)
    throw DimensionError("conv2d: bias shape " + shape_str(bias->shape) + " != (" +
                         std::to_string(o) + ")");
  if (kh < 1 || kw < 1 || stride < 1 || padding < 0)
    throw ConfigError("conv2d: kernel size >= 1, stride >= 1, padding >= 0 required");
  int oh = (h + 2 * padding - kh) / stride + 1;
  int ow = (w + 2 * padding - kw) / stride + 1;
  if (oh < 1 || ow < 1)
    throw DimensionError("conv2d: empty output for input " + shape_str(input->shape) +
                         " kernel " + shape_str(kernel->shape));

  std::size_t ckk = static_cast<std::size_t>(c) * kh * kw;
  std::size_t hw = static_cast<std::size_t>(oh) * ow;
  std::vector<float> col(ckk * hw);
  im2col(input->values.data(), c, h, w, kh, kw, stride, padding, col.data(), oh, ow);

  auto out = make_tensor({o, oh, ow});
  kern::matmul(kernel->values.data(), col.data(), out->values.data(), o, ckk, hw, false);
  for (int oc = 0; oc < o; ++oc) {
    float b = bias->values[oc];
    float* row = out->values.data() + static_cast<std::size_t>(oc) * hw;
    for (std::size_t j = 0; j < hw; ++j) row[j] += b;
  }

  g.record({input, kernel, bias}, out,
           [input, kernel, bias, out, c, h, w, kh, kw, stride, padding, o, oh, ow, ckk, hw] {
             const float* gout = out->grad.data();
             if (wants_grad(bias)) {
               for (int oc = 0; oc < o; ++oc)
                 bias->grad[oc] += kern::sum(gout + static_cast<std::size_t>(oc) * hw, hw);
             }
             if (wants_grad(kernel) || wants_grad(input)) {
               std::vector<float> col(ckk * hw);
               im2col(input->values.data(), c, h, w, kh, kw, stride, padding, col.data(), oh, ow);
               if (wants_grad(kernel))
                 matmul_abt_acc(gout, col.data(), kernel->grad.data(), o, hw, ckk);
               if (wants_grad(input)) {
                 std::vector<float> dcol(ckk * hw, 0.0f);
                 matmul_atb_acc(kernel->values.data(), gout, dcol.data(), ckk, o, hw);
                 col2im_acc(dcol.data(), c, h, w, kh, kw, stride, padding, input->grad.data(), oh,
                            ow);
               }
             }
           });
  return out;
}

TensorPtr deconv2d(Graph& g, const TensorPtr& input, const TensorPtr& kernel,
                   const TensorPtr& bias, int stride) {
  if (input->rank() != 3) throw DimensionError("deconv2d: input must be (C,H,W), got " +
                                               shape_str(input->shape));
  if (kernel->rank() != 4) throw DimensionError("deconv2d: kernel must be (I,O,KH,KW), got " +
                                                shape_str(kernel->shape));
  int c = input->dim(0), h = input->dim(1), w = input->dim(2);
  int ci = kernel->dim(0), o = kernel->dim(1), kh = kernel->dim(2), kw = kernel->dim(3);
  if (ci != c)
    throw DimensionError("deconv2d: input channels " + std::to_string(c) +
                         " != kernel input axis " + std::to_string(ci));
  if (bias->rank() != 1 || bias->dim(0) != o)
    throw DimensionError("deconv2d: bias shape " + shape_str(bias->shape) + " != (" +
                         std::to_string(o) + ")");
  if (stride < 1) throw ConfigError("deconv2d: stride >= 1 required");
  if (kh % stride != 0 || kw % stride != 0)
    throw ConfigError("deconv2d: kernel size " + std::to_string(kh) + "x" + std::to_string(kw) +
                      " not divisible by stride " + std::to_string(stride));
  if ((kh - stride) % 2 != 0 || (kw - stride) % 2 != 0)
    throw ConfigError("deconv2d: kernel/stride combination has no symmetric padding");
  int pad = (kh - stride) / 2;
  int oh = h * stride, ow = w * stride;

  std::size_t okk = static_cast<std::size_t>(o) * kh * kw;
  std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<float> colt(okk * hw, 0.0f);
  // kernel viewed as (I, O*KH*KW): colT = kernel^T * input
  matmul_atb_acc(kernel->values.data(), input->values.data(), colt.data(), okk, c, hw);

  auto out = make_tensor({o, oh, ow});
  col2im_acc(colt.data(), o, oh, ow, kh, kw, stride, pad, out->values.data(), h, w);
  std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  for (int oc = 0; oc < o; ++oc) {
    float b = bias->values[oc];
    float* row = out->values.data() + static_cast<std::size_t>(oc) * ohw;
    for (std::size_t j = 0; j < ohw; ++j) row[j] += b;
  }

  g.record({input, kernel, bias}, out,
           [input, kernel, bias, out, c, h, w, kh, kw, stride, pad, o, oh, ow, okk, hw, ohw] {
             const float* gout = out->grad.data();
             if (wants_grad(bias)) {
               for (int oc = 0; oc < o; ++oc)
                 bias->grad[oc] += kern::sum(gout + static_cast<std::size_t>(oc) * ohw, ohw);
             }
             if (wants_grad(kernel) || wants_grad(input)) {
               std::vector<float> dcolt(okk * hw);
               im2col(gout, o, oh, ow, kh, kw, stride, pad, dcolt.data(), h, w);
               if (wants_grad(input))
                 kern::matmul(kernel->values.data(), dcolt.data(), input->grad.data(), c, okk, hw,
                              true);
               if (wants_grad(kernel))
                 matmul_abt_acc(input->values.data(), dcolt.data(), kernel->grad.data(), c, hw,
                                okk);
             }
           });
  return out;
}

TensorPtr conv3d_masked(Graph& g, const TensorPtr& x, const TensorPtr& kernel,
                        const TensorPtr& bias, bool include_center) {
  if (x->rank() != 4) throw DimensionError("conv3d_masked: input must be (F,D,H,W), got " +
                                           shape_str(x->shape));
  if (kernel->rank() != 5)
    throw DimensionError("conv3d_masked: kernel must be (O,F,KD,KH,KW), got " +
                         shape_str(kernel->shape));
  int f = x->dim(0), d = x->dim(1), h = x->dim(2), w = x->dim(3);
  int o = kernel->dim(0), fi = kernel->dim(1), kd = kernel->dim(2), kh = kernel->dim(3),
      kw = kernel->dim(4);
  if (fi != f)
    throw DimensionError("conv3d_masked: feature channels " + std::to_string(f) +
                         " != kernel input axis " + std::to_string(fi));
  if (kd != kh || kh != kw || kd % 2 == 0)
    throw ConfigError("conv3d_masked: kernel must be cubic with odd size");
  if (bias->rank() != 1 || bias->dim(0) != o)
    throw DimensionError("conv3d_masked: bias shape mismatch");
  int k = kd;
  int cc = k / 2;

  // Causality mask in scan order (h, w, d-innermost).
  std::vector<float> mask(static_cast<std::size_t>(k) * k * k, 0.0f);
  for (int zd = 0; zd < k; ++zd)
    for (int zh = 0; zh < k; ++zh)
      for (int zw = 0; zw < k; ++zw) {
        int dd = zd - cc, dh = zh - cc, dw = zw - cc;
        bool ok = dh < 0 || (dh == 0 && dw < 0) ||
                  (dh == 0 && dw == 0 && (dd < 0 || (dd == 0 && include_center)));
        if (ok) mask[(static_cast<std::size_t>(zd) * k + zh) * k + zw] = 1.0f;
      }

  std::size_t fkkk = static_cast<std::size_t>(f) * k * k * k;
  std::size_t kkk = static_cast<std::size_t>(k) * k * k;
  auto masked = std::make_shared<std::vector<float>>(kernel->values.size());
  for (std::size_t i = 0; i < kernel->values.size(); ++i)
    (*masked)[i] = kernel->values[i] * mask[i % kkk];

  std::size_t vol = static_cast<std::size_t>(d) * h * w;
  std::vector<float> col(fkkk * vol);
  im2col3(x->values.data(), f, d, h, w, k, col.data());

  auto out = make_tensor({o, d, h, w});
  kern::matmul(masked->data(), col.data(), out->values.data(), o, fkkk, vol, false);
  for (int oc = 0; oc < o; ++oc) {
    float b = bias->values[oc];
    float* row = out->values.data() + static_cast<std::size_t>(oc) * vol;
    for (std::size_t j = 0; j < vol; ++j) row[j] += b;
  }

  auto maskv = std::make_shared<std::vector<float>>(std::move(mask));
  g.record({x, kernel, bias}, out,
           [x, kernel, bias, out, masked, maskv, f, d, h, w, k, o, fkkk, kkk, vol] {
             const float* gout = out->grad.data();
             if (wants_grad(bias)) {
               for (int oc = 0; oc < o; ++oc)
                 bias->grad[oc] += kern::sum(gout + static_cast<std::size_t>(oc) * vol, vol);
             }
             if (wants_grad(kernel) || wants_grad(x)) {
               std::vector<float> col(fkkk * vol);
               im2col3(x->values.data(), f, d, h, w, k, col.data());
               if (wants_grad(kernel)) {
                 std::vector<float> dm(kernel->values.size(), 0.0f);
                 matmul_abt_acc(gout, col.data(), dm.data(), o, vol, fkkk);
                 for (std::size_t i = 0; i < dm.size(); ++i)
                   kernel->grad[i] += dm[i] * (*maskv)[i % kkk];
               }
               if (wants_grad(x)) {
                 std::vector<float> dcol(fkkk * vol, 0.0f);
                 matmul_atb_acc(masked->data(), gout, dcol.data(), fkkk, o, vol);
                 col2im3_acc(dcol.data(), f, d, h, w, k, x->grad.data());
               }
             }
           });
  return out;
}

}  // namespace dpc
