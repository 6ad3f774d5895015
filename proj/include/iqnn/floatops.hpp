// Copyright 2026 The IQNN Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "iqnn/kernels.hpp"
#include "iqnn/tensor.hpp"

// Real-valued forward/backward primitives for the training path. Batched
// activations are {B, ...}; dense weights are {O, F}, conv weights OHWI.

namespace iqnn {

// x {B, F} times w {O, F} transposed, plus bias: y {B, O}.
inline Tensor dense_forward(const Tensor& x, const Tensor& w,
                            const std::vector<double>& bias) {
  const int batch = x.dim(0);
  const int features = static_cast<int>(x.numel() / batch);
  const int out = w.dim(0);
  if (w.dim(1) != features) {
    throw std::invalid_argument("dense weight shape does not match input");
  }
  Tensor y(Shape{batch, out});
  for (int b = 0; b < batch; ++b) {
    for (int o = 0; o < out; ++o) {
      double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(o)];
      const double* xp = x.v.data() + static_cast<std::size_t>(b) * features;
      const double* wp = w.v.data() + static_cast<std::size_t>(o) * features;
      for (int f = 0; f < features; ++f) acc += xp[f] * wp[f];
      y.v[static_cast<std::size_t>(b) * out + o] = acc;
    }
  }
  return y;
}

struct DenseGrads {
  Tensor dx;
  Tensor dw;
  std::vector<double> dbias;
};

inline DenseGrads dense_backward(const Tensor& x, const Tensor& w,
                                 const Tensor& dy) {
  const int batch = x.dim(0);
  const int features = static_cast<int>(x.numel() / batch);
  const int out = w.dim(0);
  DenseGrads g;
  g.dx = Tensor(x.shape);
  g.dw = Tensor(w.shape);
  g.dbias.assign(static_cast<std::size_t>(out), 0.0);
  for (int b = 0; b < batch; ++b) {
    const double* xp = x.v.data() + static_cast<std::size_t>(b) * features;
    double* dxp = g.dx.v.data() + static_cast<std::size_t>(b) * features;
    for (int o = 0; o < out; ++o) {
      const double gy = dy.v[static_cast<std::size_t>(b) * out + o];
      const double* wp = w.v.data() + static_cast<std::size_t>(o) * features;
      double* dwp = g.dw.v.data() + static_cast<std::size_t>(o) * features;
      g.dbias[static_cast<std::size_t>(o)] += gy;
      for (int f = 0; f < features; ++f) {
        dwp[f] += gy * xp[f];
        dxp[f] += gy * wp[f];
      }
    }
  }
  return g;
}

// x {B, H, W, C} with w {O, KH, KW, C}: y {B, OH, OW, O}; zero padding.
inline Tensor conv2d_forward(const Tensor& x, const Tensor& w,
                             const std::vector<double>& bias, int stride,
                             Padding padding) {
  if (x.shape.size() != 4 || w.shape.size() != 4) {
    throw std::invalid_argument("conv2d_forward expects NHWC input");
  }
  const int batch = x.dim(0), h = x.dim(1), wd = x.dim(2), c = x.dim(3);
  const int o = w.dim(0), kh = w.dim(1), kw = w.dim(2);
  if (w.dim(3) != c) {
    throw std::invalid_argument("conv weight channels do not match input");
  }
  const Conv2dGeometry g = conv2d_geometry(h, wd, kh, kw, stride, padding);
  Tensor y(Shape{batch, g.out_h, g.out_w, o});
  for (int b = 0; b < batch; ++b) {
    for (int oh = 0; oh < g.out_h; ++oh) {
      for (int ow = 0; ow < g.out_w; ++ow) {
        for (int oc = 0; oc < o; ++oc) {
          double acc =
              bias.empty() ? 0.0 : bias[static_cast<std::size_t>(oc)];
          for (int y0 = 0; y0 < kh; ++y0) {
            const int ih = oh * stride + y0 - g.pad_top;
            if (ih < 0 || ih >= h) continue;
            for (int x0 = 0; x0 < kw; ++x0) {
              const int iw = ow * stride + x0 - g.pad_left;
              if (iw < 0 || iw >= wd) continue;
              const double* xp =
                  x.v.data() + ((static_cast<std::size_t>(b) * h + ih) * wd +
                                iw) *
                                   c;
              const double* wp =
                  w.v.data() +
                  ((static_cast<std::size_t>(oc) * kh + y0) * kw + x0) * c;
              for (int ch = 0; ch < c; ++ch) acc += xp[ch] * wp[ch];
            }
          }
          y.v[((static_cast<std::size_t>(b) * g.out_h + oh) * g.out_w + ow) *
                  o +
              oc] = acc;
        }
      }
    }
  }
  return y;
}

struct ConvGrads {
  Tensor dx;
  Tensor dw;
  std::vector<double> dbias;
};

inline ConvGrads conv2d_backward(const Tensor& x, const Tensor& w,
                                 const Tensor& dy, int stride,
                                 Padding padding) {
  const int batch = x.dim(0), h = x.dim(1), wd = x.dim(2), c = x.dim(3);
  const int o = w.dim(0), kh = w.dim(1), kw = w.dim(2);
  const Conv2dGeometry g = conv2d_geometry(h, wd, kh, kw, stride, padding);
  ConvGrads grads;
  grads.dx = Tensor(x.shape);
  grads.dw = Tensor(w.shape);
  grads.dbias.assign(static_cast<std::size_t>(o), 0.0);
  for (int b = 0; b < batch; ++b) {
    for (int oh = 0; oh < g.out_h; ++oh) {
      for (int ow = 0; ow < g.out_w; ++ow) {
        for (int oc = 0; oc < o; ++oc) {
          const double gy =
              dy.v[((static_cast<std::size_t>(b) * g.out_h + oh) * g.out_w +
                    ow) *
                       o +
                   oc];
          grads.dbias[static_cast<std::size_t>(oc)] += gy;
          for (int y0 = 0; y0 < kh; ++y0) {
            const int ih = oh * stride + y0 - g.pad_top;
            if (ih < 0 || ih >= h) continue;
            for (int x0 = 0; x0 < kw; ++x0) {
              const int iw = ow * stride + x0 - g.pad_left;
              if (iw < 0 || iw >= wd) continue;
              const std::size_t xoff =
                  ((static_cast<std::size_t>(b) * h + ih) * wd + iw) * c;
              const std::size_t woff =
                  ((static_cast<std::size_t>(oc) * kh + y0) * kw + x0) * c;
              for (int ch = 0; ch < c; ++ch) {
                grads.dw.v[woff + ch] += gy * x.v[xoff + ch];
                grads.dx.v[xoff + ch] += gy * w.v[woff + ch];
              }
            }
          }
        }
      }
    }
  }
  return grads;
}

// Softmax cross-entropy over logits {B, K}; returns mean loss and fills
// dlogits with the mean-gradient (softmax - onehot) / B.
inline double softmax_cross_entropy(const Tensor& logits,
                                    const std::vector<std::uint16_t>& labels,
                                    std::size_t label_offset, Tensor* dlogits) {
  const int batch = logits.dim(0);
  const int classes = logits.dim(1);
  if (dlogits != nullptr) *dlogits = Tensor(logits.shape);
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const double* row = logits.v.data() + static_cast<std::size_t>(b) * classes;
    double maxv = row[0];
    for (int k = 1; k < classes; ++k) maxv = std::max(maxv, row[k]);
    double denom = 0.0;
    for (int k = 0; k < classes; ++k) denom += std::exp(row[k] - maxv);
    const int label = labels[label_offset + static_cast<std::size_t>(b)];
    total += -(row[label] - maxv - std::log(denom));
    if (dlogits != nullptr) {
      for (int k = 0; k < classes; ++k) {
        const double p = std::exp(row[k] - maxv) / denom;
        dlogits->v[static_cast<std::size_t>(b) * classes + k] =
            (p - (k == label ? 1.0 : 0.0)) / batch;
      }
    }
  }
  return total / batch;
}

inline int argmax_row(const double* row, int n) {
  int best = 0;
  for (int k = 1; k < n; ++k) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

}  // namespace iqnn
