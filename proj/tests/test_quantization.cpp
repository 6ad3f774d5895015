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

#include "iqnn/quantization.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <limits>

#include "iqnn/rng.hpp"

using iqnn::choose_params;
using iqnn::choose_weight_params;
using iqnn::dequantize;
using iqnn::normalize_multiplier;
using iqnn::NudgedRange;
using iqnn::QuantParams;
using iqnn::quantize;
using iqnn::quantize_bias;

namespace {

// Brute-force nudge reference: with the scale fixed, try every integer
// zero-point and pick the one that moves the endpoints the least.
int best_zero_point(double a, double b, int bits) {
  const double qmax = (1 << bits) - 1;
  const double scale = (b - a) / qmax;
  double best_cost = std::numeric_limits<double>::infinity();
  int best = -1;
  for (int zp = 0; zp <= static_cast<int>(qmax); ++zp) {
    const double na = (0.0 - zp) * scale;
    const double nb = (qmax - zp) * scale;
    const double cost = std::abs(na - a) + std::abs(nb - b);
    if (cost < best_cost - 1e-15) {
      best_cost = cost;
      best = zp;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("choose_params relu6-style range needs no nudge") {
  const NudgedRange r = choose_params(0.0, 6.0, 8);
  CHECK(r.params.scale == Catch::Approx(6.0 / 255).epsilon(1e-7));
  CHECK(r.params.zero_point == 0);
  CHECK(r.a == 0.0);
}

TEST_CASE("choose_params symmetric range nudges to zero point 128") {
  const NudgedRange r = choose_params(-1.0, 1.0, 8);
  CHECK(r.params.scale == Catch::Approx(2.0 / 255).epsilon(1e-7));
  CHECK(r.params.zero_point == 128);
  // Ties between 127 and 128 exist; both are minimal-shift candidates.
  const int brute = best_zero_point(-1.0, 1.0, 8);
  CHECK((r.params.zero_point == brute || r.params.zero_point == brute + 1));
}

TEST_CASE("choose_params forces zero into a positive range") {
  const NudgedRange r = choose_params(0.5, 6.5, 8);
  CHECK(r.a <= 0.0);
  CHECK(r.b >= 6.5 - r.params.scale);
  CHECK(dequantize(r.params.zero_point, r.params) == 0.0);
}

TEST_CASE("choose_params brute-force nudge agreement on random ranges") {
  iqnn::Rng rng(21);
  for (int i = 0; i < 2000; ++i) {
    const double a = rng.uniform(-10.0, -0.01);
    const double b = rng.uniform(0.01, 10.0);
    const NudgedRange r = choose_params(a, b, 8);
    const int brute = best_zero_point(a, b, 8);
    CHECK(std::abs(r.params.zero_point - brute) <= 1);
    CHECK(r.a <= 1e-12);
    CHECK(r.b >= -1e-12);
    // Nudged endpoints are exactly representable as the extreme codes.
    CHECK(quantize(r.a, r.params) == 0);
    CHECK(quantize(r.b, r.params) == 255);
  }
}

TEST_CASE("choose_params rejects bad ranges") {
  CHECK_THROWS_AS(choose_params(2.0, 1.0, 8), std::invalid_argument);
  CHECK_THROWS_AS(
      choose_params(0.0, std::numeric_limits<double>::infinity(), 8),
      std::invalid_argument);
  CHECK_THROWS_AS(choose_params(std::nan(""), 1.0, 8), std::invalid_argument);
}

TEST_CASE("choose_params widens degenerate ranges") {
  const NudgedRange constant = choose_params(3.0, 3.0, 8);
  CHECK(constant.params.scale > 0.0);
  CHECK(constant.a <= 0.0);
  CHECK(constant.b >= 3.0 - constant.params.scale);
  const NudgedRange zero = choose_params(0.0, 0.0, 8);
  CHECK(zero.params.scale > 0.0);
}

TEST_CASE("choose_params is idempotent on its own nudged range") {
  iqnn::Rng rng(22);
  for (int i = 0; i < 2000; ++i) {
    const double a = rng.uniform(-20.0, 0.5);
    const double b = a + rng.uniform(0.01, 25.0);
    for (int bits : {2, 4, 8}) {
      const NudgedRange r = choose_params(a, b, bits);
      const NudgedRange again = choose_params(r.a, r.b, bits);
      CHECK(again.params == r.params);
      CHECK(again.a == r.a);
      CHECK(again.b == r.b);
    }
  }
}

TEST_CASE("zero point always dequantizes to exactly zero") {
  iqnn::Rng rng(23);
  for (int i = 0; i < 1000; ++i) {
    const NudgedRange r =
        choose_params(rng.uniform(-5.0, 0.0), rng.uniform(0.0, 5.0), 8);
    CHECK(dequantize(r.params.zero_point, r.params) == 0.0);
    CHECK(quantize(0.0, r.params) == r.params.zero_point);
  }
}

TEST_CASE("quantize saturates and round-trips within half a step") {
  const NudgedRange r = choose_params(-2.0, 4.0, 8);
  CHECK(quantize(1e30, r.params) == 255);
  CHECK(quantize(-1e30, r.params) == 0);
  iqnn::Rng rng(24);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.uniform(r.a, r.b);
    const double back = dequantize(quantize(v, r.params), r.params);
    CHECK(std::abs(back - v) <= r.params.scale / 2 + 1e-12);
  }
}

TEST_CASE("quantize is monotone") {
  const NudgedRange r = choose_params(-3.0, 3.0, 8);
  iqnn::Rng rng(25);
  for (int i = 0; i < 10000; ++i) {
    const double v = rng.uniform(-4.0, 4.0);
    const double w = v + rng.uniform(0.0, 1.0);
    CHECK(quantize(v, r.params) <= quantize(w, r.params));
  }
}

TEST_CASE("normalize_multiplier boundary values") {
  const auto half = normalize_multiplier(0.5);
  CHECK(half.m0_raw == (1 << 30));
  CHECK(half.shift == 0);
  const auto quarter = normalize_multiplier(0.25);
  CHECK(quarter.m0_raw == (1 << 30));
  CHECK(quarter.shift == 1);
}

TEST_CASE("normalize_multiplier rejects out-of-range values") {
  CHECK_THROWS_AS(normalize_multiplier(0.0), std::invalid_argument);
  CHECK_THROWS_AS(normalize_multiplier(-0.5), std::invalid_argument);
  CHECK_THROWS_AS(normalize_multiplier(1.0), std::invalid_argument);
  CHECK_THROWS_AS(normalize_multiplier(1.5), std::invalid_argument);
}

TEST_CASE("normalize_multiplier reconstructs to 30 bits everywhere") {
  iqnn::Rng rng(26);
  for (int i = 0; i < 100000; ++i) {
    // Mix uniform draws with tiny magnitudes to cover many shift values.
    const double m = (i % 2 == 0) ? rng.uniform(1e-12, 1.0 - 1e-12)
                                  : std::exp2(-rng.uniform(0.0, 30.0));
    if (m <= 0.0 || m >= 1.0) continue;
    const auto qm = normalize_multiplier(m);
    CHECK(qm.m0_raw >= (1 << 30));
    CHECK(qm.shift >= 0);
    CHECK(std::abs(qm.reconstruct() - m) / m <= std::exp2(-30.0));
  }
  // Values that round up to 1.0 at the top of the interval.
  const auto top = normalize_multiplier(1.0 - 1e-12);
  CHECK(top.shift == 0);
  CHECK(std::abs(top.reconstruct() - (1.0 - 1e-12)) <= std::exp2(-30.0));
}

TEST_CASE("quantize_bias basics") {
  CHECK(quantize_bias({0.0, 0.0, 0.0}, 0.5, 0.25) ==
        std::vector<std::int32_t>{0, 0, 0});
  const double sw = 0.031, sa = 0.017;
  CHECK(quantize_bias({sw * sa}, sw, sa) == std::vector<std::int32_t>{1});
  CHECK_THROWS_AS(quantize_bias({1.0}, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("quantize_bias round-trips within half the accumulator scale") {
  iqnn::Rng rng(27);
  for (int i = 0; i < 2000; ++i) {
    const double sw = rng.uniform(1e-4, 0.1);
    const double sa = rng.uniform(1e-4, 0.1);
    std::vector<double> bias(16);
    for (auto& v : bias) v = rng.uniform(-4.0, 4.0);
    const auto q = quantize_bias(bias, sw, sa);
    for (std::size_t j = 0; j < bias.size(); ++j) {
      CHECK(std::abs(q[j] * sw * sa - bias[j]) <= sw * sa / 2 + 1e-15);
    }
  }
}

TEST_CASE("signed code domain clamps to the signed range") {
  QuantParams p;
  p.scale = 0.5;
  p.zero_point = 0;
  p.bits = 8;
  p.signed_codes = true;
  CHECK(p.qmin() == -128);
  CHECK(p.qmax() == 127);
  CHECK(quantize(1e9, p) == 127);
  CHECK(quantize(-1e9, p) == -128);
  CHECK(quantize(0.0, p) == 0);
  CHECK(dequantize(-4, p) == -2.0);
}

TEST_CASE("weight params are symmetric with fixed midpoint zero point") {
  const NudgedRange r = choose_weight_params(-0.8, 1.2, 8);
  CHECK(r.params.zero_point == 128);
  CHECK(r.params.scale == Catch::Approx(1.2 / 127).epsilon(1e-7));
  CHECK(r.a == Catch::Approx(-r.b));
  CHECK(dequantize(r.params.zero_point, r.params) == 0.0);
  // All-zero weights still get a usable scale.
  CHECK(choose_weight_params(0.0, 0.0, 8).params.scale > 0.0);
}
