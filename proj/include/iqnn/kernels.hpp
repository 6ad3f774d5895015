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

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "iqnn/quantization.hpp"
#include "iqnn/tensor.hpp"

// Integer-only compute kernels. Activations are NHWC, convolution weights
// are OHWI, matrices are row-major. Accumulation is int32 (computed in
// int64 with debug range asserts, which is bit-identical when the int32
// precondition N <= 2^16 holds).

namespace iqnn {

// Row sums of the left operand and column sums of the right operand.
// These turn per-element zero-point subtraction into O(N^2) corrections.
struct ZeroPointSums {
  std::vector<std::int32_t> lhs_row_sums;
  std::vector<std::int32_t> rhs_col_sums;
  int depth = 0;
};

// The constants that turn an int32 accumulator into an output code:
// bias add, fixed-point down-scale, zero-point add, and clamp.
struct FusedOutputStage {
  std::vector<std::int32_t> bias;  // per output row/channel; empty means 0
  QuantizedMultiplier multiplier;
  std::int32_t output_zero_point = 0;
  std::uint8_t clamp_min = 0;
  std::uint8_t clamp_max = 255;
};

namespace detail {

inline void check_matrix_2d(const QuantizedTensor& t, const char* name) {
  if (t.shape.size() != 2) {
    throw std::invalid_argument(std::string(name) + " must be 2-D");
  }
}

inline std::int32_t wrap_to_int32(std::int64_t v) {
  assert(v >= std::numeric_limits<std::int32_t>::min() &&
         v <= std::numeric_limits<std::int32_t>::max() &&
         "accumulator overflow");
  return static_cast<std::int32_t>(v);
}

}  // namespace detail

inline ZeroPointSums compute_zero_point_sums(const QuantizedTensor& lhs,
                                             const QuantizedTensor& rhs) {
  detail::check_matrix_2d(lhs, "lhs");
  detail::check_matrix_2d(rhs, "rhs");
  const int m = lhs.dim(0), n = lhs.dim(1), k = rhs.dim(1);
  if (rhs.dim(0) != n) {
    throw std::invalid_argument("gemm inner dimensions do not match");
  }
  ZeroPointSums sums;
  sums.depth = n;
  sums.lhs_row_sums.assign(static_cast<std::size_t>(m), 0);
  sums.rhs_col_sums.assign(static_cast<std::size_t>(k), 0);
  for (int i = 0; i < m; ++i) {
    std::int32_t s = 0;
    for (int j = 0; j < n; ++j) s += lhs.codes[i * n + j];
    sums.lhs_row_sums[i] = s;
  }
  for (int j = 0; j < n; ++j) {
    for (int c = 0; c < k; ++c) {
      sums.rhs_col_sums[c] += rhs.codes[j * k + c];
    }
  }
  return sums;
}

// Core uint8 x uint8 -> int32 accumulation: acc[i][k] = sum_j lhs(i,j)*rhs(j,k).
// With use_int8_pairing the operands are recentered to signed 8-bit values
// and pairs of products are accumulated on a local int16 before widening,
// mirroring the paired SIMD accumulation scheme. That path requires lhs
// codes >= 1 (so no product reaches 2^14) and is bit-identical to the plain
// path; it is off by default.
inline std::vector<std::int32_t> gemm_core(const QuantizedTensor& lhs,
                                           const QuantizedTensor& rhs,
                                           bool use_int8_pairing = false) {
  detail::check_matrix_2d(lhs, "lhs");
  detail::check_matrix_2d(rhs, "rhs");
  const int m = lhs.dim(0), n = lhs.dim(1), k = rhs.dim(1);
  if (rhs.dim(0) != n) {
    throw std::invalid_argument("gemm inner dimensions do not match");
  }
  std::vector<std::int32_t> acc(static_cast<std::size_t>(m) * k, 0);
  if (!use_int8_pairing) {
    for (int i = 0; i < m; ++i) {
      for (int c = 0; c < k; ++c) {
        std::int64_t sum = 0;
        for (int j = 0; j < n; ++j) {
          sum += static_cast<std::int32_t>(lhs.codes[i * n + j]) *
                 static_cast<std::int32_t>(rhs.codes[j * k + c]);
        }
        acc[static_cast<std::size_t>(i) * k + c] = detail::wrap_to_int32(sum);
      }
    }
    return acc;
  }
  // Signed pairing path. Recentred products (a-128)(b-128) stay below 2^14
  // in magnitude because lhs codes exclude 0; two of them fit an int16.
  const ZeroPointSums sums = compute_zero_point_sums(lhs, rhs);
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < k; ++c) {
      std::int64_t signed_acc = 0;
      int j = 0;
      for (; j + 1 < n; j += 2) {
        const auto a0 = static_cast<std::int16_t>(
            static_cast<std::int8_t>(lhs.codes[i * n + j] - 128));
        const auto b0 = static_cast<std::int16_t>(
            static_cast<std::int8_t>(rhs.codes[j * k + c] - 128));
        const auto a1 = static_cast<std::int16_t>(
            static_cast<std::int8_t>(lhs.codes[i * n + j + 1] - 128));
        const auto b1 = static_cast<std::int16_t>(
            static_cast<std::int8_t>(rhs.codes[(j + 1) * k + c] - 128));
        assert(lhs.codes[i * n + j] >= 1 && lhs.codes[i * n + j + 1] >= 1);
        const std::int16_t pair =
            static_cast<std::int16_t>(a0 * b0 + a1 * b1);
        signed_acc += pair;
      }
      for (; j < n; ++j) {
        const auto a = static_cast<std::int16_t>(
            static_cast<std::int8_t>(lhs.codes[i * n + j] - 128));
        const auto b = static_cast<std::int16_t>(
            static_cast<std::int8_t>(rhs.codes[j * k + c] - 128));
        signed_acc += static_cast<std::int16_t>(a * b);
      }
      // sum(ab) = sum((a-128)(b-128)) + 128*row + 128*col - N*128^2
      const std::int64_t unsigned_acc =
          signed_acc + std::int64_t{128} * sums.lhs_row_sums[i] +
          std::int64_t{128} * sums.rhs_col_sums[c] -
          std::int64_t{16384} * n;
      acc[static_cast<std::size_t>(i) * k + c] =
          detail::wrap_to_int32(unsigned_acc);
    }
  }
  return acc;
}

// Zero-point-corrected accumulators: the factored form
//   acc[i][k] = N*Z1*Z2 - Z1*colsum(k) - Z2*rowsum(i) + sum_j q1(i,j)q2(j,k)
// which equals the subtract-first form exactly, at O(N^2) extra cost.
inline std::vector<std::int32_t> gemm_accumulators(
    const QuantizedTensor& lhs, const QuantizedTensor& rhs,
    bool use_int8_pairing = false) {
  const std::vector<std::int32_t> core = gemm_core(lhs, rhs, use_int8_pairing);
  const ZeroPointSums sums = compute_zero_point_sums(lhs, rhs);
  const int m = lhs.dim(0), k = rhs.dim(1);
  const std::int64_t z1 = lhs.params.zero_point;
  const std::int64_t z2 = rhs.params.zero_point;
  const std::int64_t nz1z2 = static_cast<std::int64_t>(sums.depth) * z1 * z2;
  std::vector<std::int32_t> acc(core.size());
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < k; ++c) {
      const std::size_t idx = static_cast<std::size_t>(i) * k + c;
      const std::int64_t v = nz1z2 - z1 * sums.rhs_col_sums[c] -
                             z2 * sums.lhs_row_sums[i] + core[idx];
      acc[idx] = detail::wrap_to_int32(v);
    }
  }
  return acc;
}

// Applies the fused output stage to one accumulator.
inline std::uint8_t apply_output_stage(std::int32_t acc,
                                       const FusedOutputStage& stage,
                                       std::int32_t bias_term) {
  const std::int32_t with_bias = detail::wrap_to_int32(
      static_cast<std::int64_t>(acc) + bias_term);
  std::int32_t v = multiply_by_quantized_multiplier(with_bias, stage.multiplier);
  v += stage.output_zero_point;
  if (v < stage.clamp_min) v = stage.clamp_min;
  if (v > stage.clamp_max) v = stage.clamp_max;
  return static_cast<std::uint8_t>(v);
}

// Quantized matmul with the full fused output stage. The left operand is
// the weights (bias entries follow its rows).
inline QuantizedTensor gemm_quantized(const QuantizedTensor& lhs,
                                      const QuantizedTensor& rhs,
                                      const QuantParams& out_params,
                                      const FusedOutputStage& stage,
                                      bool use_int8_pairing = false) {
  const std::vector<std::int32_t> acc =
      gemm_accumulators(lhs, rhs, use_int8_pairing);
  const int m = lhs.dim(0), k = rhs.dim(1);
  if (!stage.bias.empty() &&
      static_cast<int>(stage.bias.size()) != m) {
    throw std::invalid_argument("bias length must match output rows");
  }
  QuantizedTensor out(Shape{m, k}, out_params);
  for (int i = 0; i < m; ++i) {
    const std::int32_t b = stage.bias.empty() ? 0 : stage.bias[i];
    for (int c = 0; c < k; ++c) {
      out.codes[static_cast<std::size_t>(i) * k + c] =
          apply_output_stage(acc[static_cast<std::size_t>(i) * k + c], stage,
                             b);
    }
  }
  return out;
}

enum class Padding { valid, same };

struct Conv2dGeometry {
  int out_h = 0, out_w = 0;
  int pad_top = 0, pad_left = 0;
};

inline Conv2dGeometry conv2d_geometry(int in_h, int in_w, int k_h, int k_w,
                                      int stride, Padding padding) {
  if (stride < 1 || k_h < 1 || k_w < 1) {
    throw std::invalid_argument("bad convolution geometry");
  }
  Conv2dGeometry g;
  if (padding == Padding::same) {
    g.out_h = (in_h + stride - 1) / stride;
    g.out_w = (in_w + stride - 1) / stride;
    const int pad_h = std::max((g.out_h - 1) * stride + k_h - in_h, 0);
    const int pad_w = std::max((g.out_w - 1) * stride + k_w - in_w, 0);
    g.pad_top = pad_h / 2;
    g.pad_left = pad_w / 2;
  } else {
    if (in_h < k_h || in_w < k_w) {
      throw std::invalid_argument("kernel larger than input");
    }
    g.out_h = (in_h - k_h) / stride + 1;
    g.out_w = (in_w - k_w) / stride + 1;
  }
  return g;
}

// Patch expansion. Output rows run over (kh, kw, c) to match an OHWI weight
// tensor reshaped to (O, kh*kw*c); columns run over (n, oh, ow). Positions
// outside the input contribute the zero-point code, i.e. real 0.0.
inline QuantizedTensor im2col(const QuantizedTensor& input, int k_h, int k_w,
                              int stride, Padding padding) {
  if (input.shape.size() != 4) {
    throw std::invalid_argument("im2col input must be NHWC");
  }
  const int n = input.dim(0), h = input.dim(1), w = input.dim(2),
            c = input.dim(3);
  const Conv2dGeometry g = conv2d_geometry(h, w, k_h, k_w, stride, padding);
  const int rows = k_h * k_w * c;
  const int cols = n * g.out_h * g.out_w;
  QuantizedTensor patches(Shape{rows, cols}, input.params);
  const auto zero = static_cast<std::uint8_t>(input.params.zero_point);
  for (int b = 0; b < n; ++b) {
    for (int oh = 0; oh < g.out_h; ++oh) {
      for (int ow = 0; ow < g.out_w; ++ow) {
        const int col = (b * g.out_h + oh) * g.out_w + ow;
        for (int kh = 0; kh < k_h; ++kh) {
          const int ih = oh * stride + kh - g.pad_top;
          for (int kw = 0; kw < k_w; ++kw) {
            const int iw = ow * stride + kw - g.pad_left;
            for (int ch = 0; ch < c; ++ch) {
              const int row = (kh * k_w + kw) * c + ch;
              std::uint8_t v = zero;
              if (ih >= 0 && ih < h && iw >= 0 && iw < w) {
                v = input.codes[((b * h + ih) * w + iw) * c + ch];
              }
              patches.codes[static_cast<std::size_t>(row) * cols + col] = v;
            }
          }
        }
      }
    }
  }
  return patches;
}

// Quantized 2-D convolution, lowered to patch expansion plus the quantized
// matmul so zero-padding costs nothing beyond the zero-point code.
inline QuantizedTensor conv2d_quantized(const QuantizedTensor& input,
                                        const QuantizedTensor& weights,
                                        const QuantParams& out_params,
                                        const FusedOutputStage& stage,
                                        int stride, Padding padding) {
  if (input.shape.size() != 4 || weights.shape.size() != 4) {
    throw std::invalid_argument("conv2d expects NHWC input and OHWI weights");
  }
  const int n = input.dim(0), h = input.dim(1), w = input.dim(2),
            c = input.dim(3);
  const int o = weights.dim(0), k_h = weights.dim(1), k_w = weights.dim(2);
  if (weights.dim(3) != c) {
    throw std::invalid_argument("conv2d channel counts do not match");
  }
  const Conv2dGeometry g = conv2d_geometry(h, w, k_h, k_w, stride, padding);
  const QuantizedTensor patches = im2col(input, k_h, k_w, stride, padding);

  QuantizedTensor lhs = weights;
  lhs.shape = Shape{o, k_h * k_w * c};
  const QuantizedTensor flat =
      gemm_quantized(lhs, patches, out_params, stage);

  QuantizedTensor out(Shape{n, g.out_h, g.out_w, o}, out_params);
  const int cols = n * g.out_h * g.out_w;
  for (int oc = 0; oc < o; ++oc) {
    for (int col = 0; col < cols; ++col) {
      out.codes[static_cast<std::size_t>(col) * o + oc] =
          flat.codes[static_cast<std::size_t>(oc) * cols + col];
    }
  }
  return out;
}

// Integer constants for a quantized elementwise addition: both operands are
// rescaled onto a shared intermediate grid with kLeftShift fractional bits
// of headroom, added, and rescaled to the output parameters.
struct AddStage {
  static constexpr int kLeftShift = 20;
  QuantizedMultiplier lhs_multiplier;
  QuantizedMultiplier rhs_multiplier;
  QuantizedMultiplier out_multiplier;
  std::int32_t lhs_zero_point = 0;
  std::int32_t rhs_zero_point = 0;
  std::int32_t output_zero_point = 0;
  std::uint8_t clamp_min = 0;
  std::uint8_t clamp_max = 255;
};

inline AddStage derive_add_stage(const QuantParams& lhs,
                                 const QuantParams& rhs,
                                 const QuantParams& out) {
  AddStage s;
  const double twice_max = 2.0 * std::max(lhs.scale, rhs.scale);
  s.lhs_multiplier = normalize_multiplier(lhs.scale / twice_max);
  s.rhs_multiplier = normalize_multiplier(rhs.scale / twice_max);
  s.out_multiplier = normalize_multiplier(
      twice_max / (std::exp2(AddStage::kLeftShift) * out.scale));
  s.lhs_zero_point = lhs.zero_point;
  s.rhs_zero_point = rhs.zero_point;
  s.output_zero_point = out.zero_point;
  s.clamp_min = 0;
  s.clamp_max = static_cast<std::uint8_t>(out.qmax());
  return s;
}

inline QuantizedTensor add_quantized_with_stage(const QuantizedTensor& x,
                                                const QuantizedTensor& y,
                                                const QuantParams& out_params,
                                                const AddStage& s) {
  if (x.shape != y.shape) {
    throw std::invalid_argument("add operands must have the same shape");
  }
  QuantizedTensor out(x.shape, out_params);
  for (std::size_t i = 0; i < x.codes.size(); ++i) {
    const std::int32_t dx = static_cast<std::int32_t>(x.codes[i]) -
                            s.lhs_zero_point;
    const std::int32_t dy = static_cast<std::int32_t>(y.codes[i]) -
                            s.rhs_zero_point;
    const std::int32_t sx = dx * (1 << AddStage::kLeftShift);
    const std::int32_t sy = dy * (1 << AddStage::kLeftShift);
    const std::int32_t rx =
        multiply_by_quantized_multiplier(sx, s.lhs_multiplier);
    const std::int32_t ry =
        multiply_by_quantized_multiplier(sy, s.rhs_multiplier);
    std::int32_t v =
        multiply_by_quantized_multiplier(rx + ry, s.out_multiplier);
    v += s.output_zero_point;
    if (v < s.clamp_min) v = s.clamp_min;
    if (v > s.clamp_max) v = s.clamp_max;
    out.codes[i] = static_cast<std::uint8_t>(v);
  }
  return out;
}

inline QuantizedTensor add_quantized(const QuantizedTensor& x,
                                     const QuantizedTensor& y,
                                     const QuantParams& out_params) {
  return add_quantized_with_stage(x, y, out_params,
                                  derive_add_stage(x.params, y.params,
                                                   out_params));
}

// Concatenation requires every part to carry identical parameters; it is
// then a byte-wise juxtaposition with no arithmetic at all. A mismatch
// means the converter failed to harmonize parameters upstream.
inline QuantizedTensor concat_quantized(
    const std::vector<const QuantizedTensor*>& parts, int axis) {
  if (parts.empty()) {
    throw std::invalid_argument("concat of zero tensors");
  }
  const QuantizedTensor& first = *parts.front();
  const int rank = static_cast<int>(first.shape.size());
  if (axis < 0 || axis >= rank) {
    throw std::invalid_argument("concat axis out of range");
  }
  int axis_total = 0;
  for (const QuantizedTensor* p : parts) {
    if (!(p->params == first.params)) {
      throw std::invalid_argument(
          "concat inputs must share quantization parameters");
    }
    if (static_cast<int>(p->shape.size()) != rank) {
      throw std::invalid_argument("concat rank mismatch");
    }
    for (int d = 0; d < rank; ++d) {
      if (d != axis && p->shape[d] != first.shape[d]) {
        throw std::invalid_argument("concat off-axis shape mismatch");
      }
    }
    axis_total += p->dim(axis);
  }
  Shape out_shape = first.shape;
  out_shape[static_cast<std::size_t>(axis)] = axis_total;
  QuantizedTensor out(std::move(out_shape), first.params);

  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= first.shape[d];
  for (int d = axis + 1; d < rank; ++d) inner *= first.shape[d];
  std::int64_t offset = 0;
  for (const QuantizedTensor* p : parts) {
    const std::int64_t block = p->dim(axis) * inner;
    for (std::int64_t ob = 0; ob < outer; ++ob) {
      const auto* src = p->codes.data() + ob * block;
      auto* dst = out.codes.data() + ob * axis_total * inner + offset;
      for (std::int64_t i = 0; i < block; ++i) dst[i] = src[i];
    }
    offset += block;
  }
  return out;
}

}  // namespace iqnn
