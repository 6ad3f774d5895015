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
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "iqnn/fixedpoint.hpp"

// Affine quantization: real values r and B-bit codes q are related by
// r = S * (q - Z) with a positive scale S and an integer zero-point Z, so
// that r == 0 is always exactly representable. One (S, Z) pair per tensor.

namespace iqnn {

struct QuantParams {
  // Stored as double for exact arithmetic but always snapped to a value
  // representable in 32-bit float, so serialization is lossless.
  double scale = 1.0;
  std::int32_t zero_point = 0;
  int bits = 8;
  bool signed_codes = false;

  std::int32_t qmin() const { return signed_codes ? -(1 << (bits - 1)) : 0; }
  std::int32_t qmax() const {
    return signed_codes ? (1 << (bits - 1)) - 1 : (1 << bits) - 1;
  }

  friend bool operator==(const QuantParams& a, const QuantParams& b) {
    return a.scale == b.scale && a.zero_point == b.zero_point &&
           a.bits == b.bits && a.signed_codes == b.signed_codes;
  }
};

// A real multiplier M in (0, 1) in the normalized form M = (m0/2^31) * 2^-n
// with m0 in [2^30, 2^31), i.e. at least 30 bits of relative accuracy.
struct QuantizedMultiplier {
  std::int32_t m0_raw = 1 << 30;
  int shift = 0;

  double reconstruct() const {
    return static_cast<double>(m0_raw) * std::exp2(-31.0 - shift);
  }

  friend bool operator==(const QuantizedMultiplier& a,
                         const QuantizedMultiplier& b) {
    return a.m0_raw == b.m0_raw && a.shift == b.shift;
  }
};

// A real range [a, b] minimally adjusted so that 0.0 falls exactly on the
// quantization grid, together with the resulting parameters.
struct NudgedRange {
  double a = 0.0;
  double b = 0.0;
  QuantParams params;
};

namespace detail {

inline double snap_to_float(double v) {
  return static_cast<double>(static_cast<float>(v));
}

// round-to-nearest with ties away from zero; the one rounding used on the
// real-to-code boundary everywhere, so the float simulation and the integer
// engine cannot disagree on ties.
inline std::int64_t round_ties_away(double v) {
  return std::llround(v);
}

}  // namespace detail

// Chooses quantization parameters for the real range [a, b]. The range is
// first extended to contain zero, then the zero-point is rounded to an
// integer code and the endpoints shifted by the sub-scale residual, which
// keeps the scale and moves each endpoint by at most half a step.
inline NudgedRange choose_params(double a, double b, int bits) {
  if (!(std::isfinite(a) && std::isfinite(b))) {
    throw std::invalid_argument("choose_params: range must be finite");
  }
  if (a > b) {
    throw std::invalid_argument("choose_params: range min exceeds max");
  }
  if (bits < 2 || bits > 8) {
    throw std::invalid_argument("choose_params: bits out of [2, 8]");
  }
  a = std::min(a, 0.0);
  b = std::max(b, 0.0);
  if (a == b) {
    b = 1e-6;  // scale floor for fully degenerate ranges
  }
  const double qmax = static_cast<double>((1 << bits) - 1);
  // Nudge in exact double arithmetic; snap the stored scale afterwards.
  const double exact_scale = (b - a) / qmax;
  const double zero_point_from_min = -a / exact_scale;
  const double scale = detail::snap_to_float(exact_scale);
  std::int64_t zp;
  if (zero_point_from_min <= 0.0) {
    zp = 0;
  } else if (zero_point_from_min >= qmax) {
    zp = static_cast<std::int64_t>(qmax);
  } else {
    zp = detail::round_ties_away(zero_point_from_min);
  }
  NudgedRange out;
  out.params.scale = scale;
  out.params.zero_point = static_cast<std::int32_t>(zp);
  out.params.bits = bits;
  out.a = (0.0 - static_cast<double>(zp)) * scale;
  out.b = (qmax - static_cast<double>(zp)) * scale;
  return out;
}

// Parameters for weight tensors: a symmetric grid around zero whose codes,
// viewed as signed values, span [-(2^(B-1)-1), 2^(B-1)-1] and never reach
// the most negative code. The zero-point is fixed at 2^(B-1).
inline NudgedRange choose_weight_params(double w_min, double w_max, int bits) {
  if (!(std::isfinite(w_min) && std::isfinite(w_max)) || w_min > w_max) {
    throw std::invalid_argument("choose_weight_params: bad range");
  }
  double m = std::max({-w_min, w_max, 0.0});
  m = std::max(m, 1e-6);
  const int half_levels = (1 << (bits - 1)) - 1;
  NudgedRange out;
  out.params.scale = detail::snap_to_float(m / half_levels);
  out.params.zero_point = 1 << (bits - 1);
  out.params.bits = bits;
  out.a = -static_cast<double>(half_levels) * out.params.scale;
  out.b = static_cast<double>(half_levels) * out.params.scale;
  return out;
}

// Nearest code for a real value; saturates at the ends of the code range.
inline std::int32_t quantize(double r, const QuantParams& p) {
  const double q = r / p.scale;
  std::int64_t code;
  if (std::isnan(q)) {
    code = p.zero_point;
  } else if (q >= 2e9) {
    code = p.qmax();
  } else if (q <= -2e9) {
    code = p.qmin();
  } else {
    code = detail::round_ties_away(q) + p.zero_point;
  }
  if (code < p.qmin()) code = p.qmin();
  if (code > p.qmax()) code = p.qmax();
  return static_cast<std::int32_t>(code);
}

inline double dequantize(std::int32_t q, const QuantParams& p) {
  return p.scale * static_cast<double>(q - p.zero_point);
}

// Normalizes a real multiplier M in (0, 1) into (m0, shift) form. If M is
// so close to 1 that rounding would carry m0 past 2^31 with no shift left
// to absorb it, m0 saturates at 2^31-1, which stays within the 2^-30
// relative accuracy bound.
inline QuantizedMultiplier normalize_multiplier(double m) {
  if (!(m > 0.0) || m >= 1.0 || !std::isfinite(m)) {
    throw std::invalid_argument(
        "normalize_multiplier: multiplier must be in (0, 1), got " +
        std::to_string(m));
  }
  int exponent = 0;
  const double mantissa = std::frexp(m, &exponent);  // m = mantissa * 2^exp
  QuantizedMultiplier out;
  out.shift = -exponent;
  std::int64_t m0 = detail::round_ties_away(mantissa * std::exp2(31.0));
  if (m0 == (std::int64_t{1} << 31)) {
    if (out.shift == 0) {
      m0 = (std::int64_t{1} << 31) - 1;
    } else {
      m0 >>= 1;
      out.shift -= 1;
    }
  }
  out.m0_raw = static_cast<std::int32_t>(m0);
  return out;
}

inline std::int32_t multiply_by_quantized_multiplier(
    std::int32_t acc, const QuantizedMultiplier& m) {
  return multiply_by_quantized_multiplier(acc, m.m0_raw, m.shift);
}

// Biases are quantized as int32 with scale S_weights * S_activations and
// zero-point 0, so they add directly into the matmul accumulators.
inline std::vector<std::int32_t> quantize_bias(
    const std::vector<double>& bias, double s_weights, double s_activations) {
  if (!(s_weights > 0.0) || !(s_activations > 0.0)) {
    throw std::invalid_argument("quantize_bias: scales must be positive");
  }
  const double s = s_weights * s_activations;
  std::vector<std::int32_t> out(bias.size());
  for (std::size_t i = 0; i < bias.size(); ++i) {
    const double q = bias[i] / s;
    std::int64_t v;
    if (q >= 2147483647.0) {
      v = 2147483647;
    } else if (q <= -2147483648.0) {
      v = -2147483648LL;
    } else {
      v = detail::round_ties_away(q);
    }
    out[i] = static_cast<std::int32_t>(v);
  }
  return out;
}

}  // namespace iqnn
