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

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>

// Portable, bit-exact emulation of the fixed-point primitives that map to
// ARM NEON instructions on real inference engines, plus transcendental
// functions (logistic, tanh) evaluated entirely in 32-bit integer
// arithmetic. Everything here is a pure function: same inputs give the same
// bits on every platform.

namespace iqnn {

// Fixed-point multiplication of two int32 values interpreted in Q0.31
// format: returns a*b/2^31 with round-to-nearest (ties toward +inf) and
// saturation. Matches the semantics of the ARM SQRDMULH instruction; the
// "doubling" refers to the result being a*b/2^31 rather than a*b/2^32.
// The single overflow case a == b == INT32_MIN saturates to INT32_MAX.
inline std::int32_t saturating_rounding_doubling_high_mul(std::int32_t a,
                                                          std::int32_t b) {
  const bool overflow =
      a == b && a == std::numeric_limits<std::int32_t>::min();
  const std::int64_t ab = static_cast<std::int64_t>(a) * b;
  const std::int32_t nudge =
      ab >= 0 ? (1 << 30) : (1 - (1 << 30));
  const std::int32_t high =
      static_cast<std::int32_t>((ab + nudge) / (std::int64_t{1} << 31));
  return overflow ? std::numeric_limits<std::int32_t>::max() : high;
}

// Rounding right shift: x / 2^exponent, round-to-nearest with ties away
// from zero. The NEON rounding shift (RSHL with negative offset) rounds
// ties upward instead, which biases results upward; this is the corrected
// behavior that inference code has to reproduce with fix-up arithmetic.
inline std::int32_t rounding_divide_by_pot(std::int32_t x, int exponent) {
  assert(exponent >= 0 && exponent <= 31);
  const std::int32_t mask =
      static_cast<std::int32_t>((std::int64_t{1} << exponent) - 1);
  const std::int32_t remainder = x & mask;
  const std::int32_t threshold = (mask >> 1) + (x < 0 ? 1 : 0);
  return (x >> exponent) + (remainder > threshold ? 1 : 0);
}

// Rescales an int32 accumulator by the real multiplier m0/2^31 * 2^-shift.
// This is the down-scaling step of every fused layer's output stage.
inline std::int32_t multiply_by_quantized_multiplier(std::int32_t acc,
                                                     std::int32_t m0_raw,
                                                     int shift) {
  return rounding_divide_by_pot(
      saturating_rounding_doubling_high_mul(acc, m0_raw), shift);
}

namespace detail {

inline std::int32_t saturating_neg(std::int32_t x) {
  return x == std::numeric_limits<std::int32_t>::min()
             ? std::numeric_limits<std::int32_t>::max()
             : -x;
}

inline std::int32_t saturate_from_int64(std::int64_t v) {
  if (v > std::numeric_limits<std::int32_t>::max()) {
    return std::numeric_limits<std::int32_t>::max();
  }
  if (v < std::numeric_limits<std::int32_t>::min()) {
    return std::numeric_limits<std::int32_t>::min();
  }
  return static_cast<std::int32_t>(v);
}

// (a + b + 1) / 2 computed without overflow; the SRHADD semantics.
inline std::int32_t rounding_half_sum(std::int32_t a, std::int32_t b) {
  const std::int64_t sum = static_cast<std::int64_t>(a) + b + 1;
  return static_cast<std::int32_t>(sum >> 1);
}

// x * 2^exponent with saturation for positive exponents and correct
// rounding for negative ones.
inline std::int32_t saturating_rounding_mul_by_pot(std::int32_t x,
                                                   int exponent) {
  if (exponent >= 0) {
    return saturate_from_int64(static_cast<std::int64_t>(x) << exponent);
  }
  return rounding_divide_by_pot(x, -exponent);
}

}  // namespace detail

// A real number stored as a 32-bit integer with a compile-time binary point.
// The represented value is raw * 2^(IntegerBits - 31); IntegerBits == 0
// covers [-1, 1). Mixing different IntegerBits in arithmetic is a type
// error, which is exactly what we want.
template <int IntegerBits>
class FixedQ {
  static_assert(IntegerBits >= 0 && IntegerBits <= 6,
                "unsupported binary point position");

 public:
  static constexpr int kIntegerBits = IntegerBits;
  static constexpr int kFractionalBits = 31 - IntegerBits;

  constexpr FixedQ() = default;

  static constexpr FixedQ from_raw(std::int32_t raw) {
    FixedQ f;
    f.raw_ = raw;
    return f;
  }

  // Nearest representable value, saturating at the ends of the range.
  static FixedQ from_double(double v) {
    const double scaled = v * std::exp2(static_cast<double>(kFractionalBits));
    return from_raw(detail::saturate_from_int64(
        static_cast<std::int64_t>(std::llround(scaled))));
  }

  static constexpr FixedQ zero() { return from_raw(0); }

  // Largest representable value; stands in for 1.0 when IntegerBits == 0.
  static constexpr FixedQ one() {
    return IntegerBits == 0
               ? from_raw(std::numeric_limits<std::int32_t>::max())
               : from_raw(std::int32_t{1} << kFractionalBits);
  }

  // The constant 2^Exponent.
  template <int Exponent>
  static constexpr FixedQ constant_pot() {
    static_assert(Exponent + kFractionalBits >= 0 &&
                  Exponent + kFractionalBits < 31);
    return from_raw(std::int32_t{1} << (Exponent + kFractionalBits));
  }

  constexpr std::int32_t raw() const { return raw_; }

  double to_double() const {
    return static_cast<double>(raw_) *
           std::exp2(static_cast<double>(-kFractionalBits));
  }

  friend constexpr FixedQ operator+(FixedQ a, FixedQ b) {
    return from_raw(static_cast<std::int32_t>(
        static_cast<std::int64_t>(a.raw_) + b.raw_));
  }
  friend constexpr FixedQ operator-(FixedQ a, FixedQ b) {
    return from_raw(static_cast<std::int32_t>(
        static_cast<std::int64_t>(a.raw_) - b.raw_));
  }
  friend FixedQ operator-(FixedQ a) {
    return from_raw(detail::saturating_neg(a.raw_));
  }
  friend constexpr bool operator==(FixedQ a, FixedQ b) {
    return a.raw_ == b.raw_;
  }

 private:
  std::int32_t raw_ = 0;
};

// Product of fixed-point values; the binary points add up.
template <int IbA, int IbB>
inline FixedQ<IbA + IbB> operator*(FixedQ<IbA> a, FixedQ<IbB> b) {
  return FixedQ<IbA + IbB>::from_raw(
      saturating_rounding_doubling_high_mul(a.raw(), b.raw()));
}

// Moves the binary point, saturating when the target range is smaller.
template <int To, int From>
inline FixedQ<To> rescale(FixedQ<From> x) {
  return FixedQ<To>::from_raw(
      detail::saturating_rounding_mul_by_pot(x.raw(), From - To));
}

namespace detail {

// exp(a) for a in [-1/4, 0), via a 4th-order Taylor expansion around -1/8.
inline FixedQ<0> exp_on_interval_between_negative_one_quarter_and_0_excl(
    FixedQ<0> a) {
  using F = FixedQ<0>;
  const F constant_term = F::from_raw(1895147668);    // exp(-1/8) * 2^31
  const F constant_1_over_3 = F::from_raw(715827883);  // 2^31 / 3
  const F x = a + F::constant_pot<-3>();
  const F x2 = x * x;
  const F x3 = x2 * x;
  const F x4 = x2 * x2;
  const F x4_over_4 = F::from_raw(rounding_divide_by_pot(x4.raw(), 2));
  const F tail = F::from_raw(rounding_divide_by_pot(
      ((x4_over_4 + x3) * constant_1_over_3 + x2).raw(), 1));
  return constant_term + constant_term * (x + tail);
}

// exp(a) for a <= 0. Range-reduces to a quarter-wide interval and folds the
// remaining multiples of 1/4 back in through a fixed set of constants, one
// per bit of the quotient. No value tables, just arithmetic and masked
// constant multiplications.
template <int IntegerBits>
inline FixedQ<0> exp_on_negative_values(FixedQ<IntegerBits> a) {
  using ResultF = FixedQ<0>;
  assert(a.raw() <= 0);
  if (a.raw() == 0) {
    return ResultF::one();
  }
  constexpr int kFractionalBits = FixedQ<IntegerBits>::kFractionalBits;
  constexpr std::int32_t kQuarterRaw = std::int32_t{1}
                                       << (kFractionalBits - 2);
  const std::int32_t rem = a.raw() & (kQuarterRaw - 1);
  // (a mod 1/4) - 1/4, rescaled to Q0.31.
  const ResultF interval_arg = ResultF::from_raw(
      static_cast<std::int32_t>(rem - kQuarterRaw) << IntegerBits);
  ResultF result =
      exp_on_interval_between_negative_one_quarter_and_0_excl(interval_arg);
  // Number of whole quarters still to account for; at most 2^(IntegerBits+2).
  const std::int32_t quarters =
      static_cast<std::int32_t>(((static_cast<std::int64_t>(rem) -
                                  kQuarterRaw - a.raw())) >>
                                (kFractionalBits - 2));
  static constexpr std::int32_t kExpQuarterConstants[] = {
      1672461947,  // exp(-1/4) * 2^31
      1302514674,  // exp(-1/2) * 2^31
      790015084,   // exp(-1)   * 2^31
      290630308,   // exp(-2)   * 2^31
      39332535,    // exp(-4)   * 2^31
      720401,      // exp(-8)   * 2^31
      242,         // exp(-16)  * 2^31
      0,           // exp(-32)  * 2^31
  };
  for (int k = 0; k < IntegerBits + 2; ++k) {
    if (quarters & (std::int32_t{1} << k)) {
      result = result * ResultF::from_raw(kExpQuarterConstants[k]);
    }
  }
  return result;
}

// Newton-Raphson reciprocal of (1+x)/2 for x in [0, 1]; result is in [1, 2]
// and carried with two integer bits. Division-free: three iterations from
// the classic 48/17 - 32/17 * d seed are enough for full precision here.
inline FixedQ<2> one_over_half_denominator(FixedQ<0> half_denominator) {
  using F2 = FixedQ<2>;
  const F2 constant_48_over_17 = F2::from_raw(1515870810);
  const F2 constant_neg_32_over_17 = F2::from_raw(-1010580540);
  F2 x = constant_48_over_17 + half_denominator * constant_neg_32_over_17;
  for (int i = 0; i < 3; ++i) {
    const F2 hd_x = half_denominator * x;
    const F2 one_minus_hd_x = F2::one() - hd_x;
    x = x + rescale<2>(x * one_minus_hd_x);
  }
  return x;
}

// 1 / (1 + x) for x in [0, 1].
inline FixedQ<0> one_over_one_plus_x_for_x_in_0_1(FixedQ<0> a) {
  assert(a.raw() >= 0);
  const FixedQ<0> half_denominator =
      FixedQ<0>::from_raw(rounding_half_sum(a.raw(), FixedQ<0>::one().raw()));
  const FixedQ<2> recip = one_over_half_denominator(half_denominator);
  // recip / 2 == 1 / (1 + a), moved back to Q0.31.
  return FixedQ<0>::from_raw(
      saturating_rounding_mul_by_pot(recip.raw(), 1));
}

// (1 - x) / (1 + x) for x in [0, 1].
inline FixedQ<0> one_minus_x_over_one_plus_x_for_x_in_0_1(FixedQ<0> a) {
  assert(a.raw() >= 0);
  const FixedQ<0> half_denominator =
      FixedQ<0>::from_raw(rounding_half_sum(a.raw(), FixedQ<0>::one().raw()));
  const FixedQ<2> recip = one_over_half_denominator(half_denominator);
  const FixedQ<0> half_numerator = FixedQ<0>::from_raw(
      rounding_half_sum(FixedQ<0>::one().raw(), saturating_neg(a.raw())));
  const FixedQ<2> result = recip * half_numerator;
  return rescale<0>(result);
}

}  // namespace detail

// Logistic function evaluated in pure fixed-point arithmetic. The input
// carries 4 integer bits (range [-16, 16)); the result is in Q0.31.
template <int IntegerBits>
inline FixedQ<0> fixed_logistic(FixedQ<IntegerBits> x) {
  using ResultF = FixedQ<0>;
  if (x.raw() == 0) {
    return ResultF::template constant_pot<-1>();  // exactly 0.5
  }
  const bool negative = x.raw() < 0;
  const FixedQ<IntegerBits> minus_abs =
      FixedQ<IntegerBits>::from_raw(negative ? x.raw()
                                             : detail::saturating_neg(x.raw()));
  const ResultF t = detail::exp_on_negative_values(minus_abs);
  const ResultF positive_result = detail::one_over_one_plus_x_for_x_in_0_1(t);
  if (!negative) {
    return positive_result;
  }
  return ResultF::from_raw(ResultF::one().raw() - positive_result.raw());
}

// Hyperbolic tangent in pure fixed-point arithmetic; input as above,
// result in Q0.31.
template <int IntegerBits>
inline FixedQ<0> fixed_tanh(FixedQ<IntegerBits> x) {
  using ResultF = FixedQ<0>;
  if (x.raw() == 0) {
    return ResultF::zero();
  }
  const bool negative = x.raw() < 0;
  const std::int32_t minus_abs_raw =
      negative ? x.raw() : detail::saturating_neg(x.raw());
  // exp argument is 2 * (-|x|); saturating the doubling clamps |x| at the
  // representable maximum, where tanh is 1 to far beyond our precision.
  const FixedQ<IntegerBits> doubled = FixedQ<IntegerBits>::from_raw(
      detail::saturate_from_int64(std::int64_t{2} * minus_abs_raw));
  const ResultF t = detail::exp_on_negative_values(doubled);
  const ResultF abs_result =
      detail::one_minus_x_over_one_plus_x_for_x_in_0_1(t);
  return negative ? ResultF::from_raw(-abs_result.raw()) : abs_result;
}

}  // namespace iqnn
