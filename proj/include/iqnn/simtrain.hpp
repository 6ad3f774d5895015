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

#include "iqnn/graph.hpp"
#include "iqnn/quantization.hpp"
#include "iqnn/tensor.hpp"

// Simulated quantization for training: the forward pass snaps values onto
// the same grid the integer engine will use, gradients flow straight
// through inside the clamp range, and activation ranges are tracked with
// exponential moving averages.

namespace iqnn {

// Snaps every element onto the nudged quantization grid of [a, b]. Going
// through quantize/dequantize makes the float simulation and the integer
// engine agree bit-for-bit on grid values.
inline Tensor fake_quant_with_params(const Tensor& r, const QuantParams& p) {
  Tensor out(r.shape);
  for (std::size_t i = 0; i < r.v.size(); ++i) {
    out.v[i] = dequantize(quantize(r.v[i], p), p);
  }
  return out;
}

inline Tensor fake_quant_forward(const Tensor& r, double a, double b,
                                 int bits) {
  return fake_quant_with_params(r, choose_params(a, b, bits).params);
}

// Straight-through gradient: identity inside the nudged clamp range, zero
// where the forward pass clamped.
inline Tensor fake_quant_backward(const Tensor& upstream, const Tensor& r,
                                  double nudged_a, double nudged_b) {
  if (upstream.shape != r.shape) {
    throw std::invalid_argument("fake_quant_backward shape mismatch");
  }
  Tensor out(upstream.shape);
  for (std::size_t i = 0; i < r.v.size(); ++i) {
    out.v[i] =
        (r.v[i] >= nudged_a && r.v[i] <= nudged_b) ? upstream.v[i] : 0.0;
  }
  return out;
}

// EMA-smoothed (min, max) statistics of the activations seen at one site.
// The first batch initializes the state directly.
struct RangeObserver {
  double ema_min = 0.0;
  double ema_max = 0.0;
  double decay = 0.999;
  std::int64_t steps_seen = 0;

  void update(const double* data, std::size_t n) {
    if (n == 0) {
      throw std::invalid_argument("RangeObserver: empty batch");
    }
    double lo = data[0], hi = data[0];
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, data[i]);
      hi = std::max(hi, data[i]);
    }
    if (steps_seen == 0) {
      ema_min = lo;
      ema_max = hi;
    } else {
      ema_min = decay * ema_min + (1.0 - decay) * lo;
      ema_max = decay * ema_max + (1.0 - decay) * hi;
    }
    ++steps_seen;
  }

  void update(const Tensor& t) { update(t.v.data(), t.v.size()); }
};

inline RangeObserver observe_and_update(RangeObserver obs,
                                        const Tensor& batch) {
  obs.update(batch);
  return obs;
}

// Folds batch normalization into the preceding layer's weights:
//   w_fold = gamma * w / sqrt(ema_var + eps)
//   bias_fold = beta - gamma * ema_mean / sqrt(ema_var + eps)
// Output channels run along dimension 0 of the weight tensor.
inline std::pair<Tensor, std::vector<double>> fold_batch_norm(
    const Tensor& w, const BatchNormParams& bn) {
  const int out_channels = w.dim(0);
  if (bn.gamma.size() != static_cast<std::size_t>(out_channels) ||
      bn.beta.size() != bn.gamma.size() ||
      bn.ema_mean.size() != bn.gamma.size() ||
      bn.ema_var.size() != bn.gamma.size()) {
    throw std::invalid_argument(
        "fold_batch_norm: channel counts do not match");
  }
  const std::size_t per_channel =
      w.v.size() / static_cast<std::size_t>(out_channels);
  Tensor w_fold(w.shape);
  std::vector<double> bias_fold(static_cast<std::size_t>(out_channels));
  for (int o = 0; o < out_channels; ++o) {
    const auto oc = static_cast<std::size_t>(o);
    const double sigma = std::sqrt(bn.ema_var[oc] + bn.epsilon);
    const double factor = bn.gamma[oc] / sigma;
    for (std::size_t j = 0; j < per_channel; ++j) {
      w_fold.v[oc * per_channel + j] = w.v[oc * per_channel + j] * factor;
    }
    bias_fold[oc] = bn.beta[oc] - bn.gamma[oc] * bn.ema_mean[oc] / sigma;
  }
  return {std::move(w_fold), std::move(bias_fold)};
}

// Weight fake quantization: symmetric range from the current min/max, grid
// restricted so the signed code -2^(B-1) never occurs.
struct QuantizedWeights {
  Tensor values;          // snapped to the grid
  NudgedRange range;
};

inline QuantizedWeights fake_quant_weights(const Tensor& w, int bits) {
  double lo = 0.0, hi = 0.0;
  for (double v : w.v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  QuantizedWeights out;
  out.range = choose_weight_params(lo, hi, bits);
  out.values = Tensor(w.shape);
  for (std::size_t i = 0; i < w.v.size(); ++i) {
    std::int32_t code = quantize(w.v[i], out.range.params);
    if (code < 1) code = 1;
    out.values.v[i] = dequantize(code, out.range.params);
  }
  return out;
}

}  // namespace iqnn
