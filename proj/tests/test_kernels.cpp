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

#include "iqnn/kernels.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdint>
#include <vector>

#include "iqnn/rng.hpp"
#include "oracles.hpp"

using namespace iqnn;

namespace {

QuantParams make_params(double scale, int zero_point, int bits = 8) {
  QuantParams p;
  p.scale = static_cast<double>(static_cast<float>(scale));
  p.zero_point = zero_point;
  p.bits = bits;
  return p;
}

QuantizedTensor random_qtensor(Rng& rng, Shape shape, const QuantParams& p,
                               int code_min = 0, int code_max = 255) {
  QuantizedTensor t(std::move(shape), p);
  for (auto& c : t.codes) {
    c = static_cast<std::uint8_t>(rng.range(code_min, code_max));
  }
  return t;
}

// Direct 6-loop integer convolution in 64-bit arithmetic, subtract-first
// form with explicit zero-padding; the independent reference for conv2d.
std::vector<std::int64_t> conv_oracle_acc(const QuantizedTensor& input,
                                          const QuantizedTensor& weights,
                                          int stride, Padding padding) {
  const int n = input.dim(0), h = input.dim(1), w = input.dim(2),
            c = input.dim(3);
  const int o = weights.dim(0), kh = weights.dim(1), kw = weights.dim(2);
  const Conv2dGeometry g = conv2d_geometry(h, w, kh, kw, stride, padding);
  std::vector<std::int64_t> acc(
      static_cast<std::size_t>(n) * g.out_h * g.out_w * o, 0);
  for (int b = 0; b < n; ++b) {
    for (int oh = 0; oh < g.out_h; ++oh) {
      for (int ow = 0; ow < g.out_w; ++ow) {
        for (int oc = 0; oc < o; ++oc) {
          std::int64_t sum = 0;
          for (int y = 0; y < kh; ++y) {
            for (int x = 0; x < kw; ++x) {
              for (int ch = 0; ch < c; ++ch) {
                const int ih = oh * stride + y - g.pad_top;
                const int iw = ow * stride + x - g.pad_left;
                std::int64_t in_code = input.params.zero_point;
                if (ih >= 0 && ih < h && iw >= 0 && iw < w) {
                  in_code = input.codes[((b * h + ih) * w + iw) * c + ch];
                }
                const std::int64_t w_code =
                    weights.codes[((oc * kh + y) * kw + x) * c + ch];
                sum += (w_code - weights.params.zero_point) *
                       (in_code - input.params.zero_point);
              }
            }
          }
          acc[((static_cast<std::size_t>(b) * g.out_h + oh) * g.out_w + ow) *
                  o +
              oc] = sum;
        }
      }
    }
  }
  return acc;
}

}  // namespace

TEST_CASE("gemm_core 1x1x1 and zero cases") {
  const QuantParams p = make_params(1.0, 0);
  QuantizedTensor lhs(Shape{1, 1}, p);
  QuantizedTensor rhs(Shape{1, 1}, p);
  lhs.codes[0] = 3;
  rhs.codes[0] = 5;
  CHECK(gemm_core(lhs, rhs) == std::vector<std::int32_t>{15});

  Rng rng(31);
  QuantizedTensor zeros(Shape{4, 6}, p);
  for (auto& c : zeros.codes) c = 0;
  const QuantizedTensor r = random_qtensor(rng, Shape{6, 3}, p);
  for (std::int32_t acc : gemm_core(zeros, r)) CHECK(acc == 0);
}

TEST_CASE("gemm_core shape mismatch throws") {
  const QuantParams p = make_params(1.0, 0);
  QuantizedTensor lhs(Shape{2, 3}, p);
  QuantizedTensor rhs(Shape{4, 2}, p);
  CHECK_THROWS_AS(gemm_core(lhs, rhs), std::invalid_argument);
}

TEST_CASE("gemm_core matches triple-loop oracle") {
  Rng rng(32);
  for (int trial = 0; trial < 50; ++trial) {
    const QuantParams p = make_params(1.0, 0);
    const auto lhs = random_qtensor(rng, Shape{8, 8}, p);
    const auto rhs = random_qtensor(rng, Shape{8, 8}, p);
    const auto got = gemm_core(lhs, rhs);
    const auto want =
        oracle::gemm_subtract_first(lhs.codes, rhs.codes, 8, 8, 8, 0, 0);
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(static_cast<std::int64_t>(got[i]) == want[i]);
    }
  }
}

TEST_CASE("int8 pairing path is bit-identical to the plain path") {
  Rng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = rng.range(1, 9), n = rng.range(1, 33), k = rng.range(1, 9);
    const QuantParams pl = make_params(0.02, rng.range(0, 255));
    const QuantParams pr = make_params(0.05, rng.range(0, 255));
    // Pairing requires weight-side codes to exclude 0.
    const auto lhs = random_qtensor(rng, Shape{m, n}, pl, 1, 255);
    const auto rhs = random_qtensor(rng, Shape{n, k}, pr, 0, 255);
    CHECK(gemm_core(lhs, rhs, true) == gemm_core(lhs, rhs, false));
    CHECK(gemm_accumulators(lhs, rhs, true) ==
          gemm_accumulators(lhs, rhs, false));
  }
}

TEST_CASE("zero zero-points reduce accumulators to the core sum") {
  Rng rng(34);
  const QuantParams p = make_params(0.5, 0);
  const auto lhs = random_qtensor(rng, Shape{5, 7}, p);
  const auto rhs = random_qtensor(rng, Shape{7, 4}, p);
  CHECK(gemm_accumulators(lhs, rhs) == gemm_core(lhs, rhs));
}

TEST_CASE("factored zero-point form equals subtract-first form exactly") {
  Rng rng(35);
  for (int trial = 0; trial < 300; ++trial) {
    const int m = rng.range(1, 16), n = rng.range(1, 16), k = rng.range(1, 16);
    const QuantParams pl = make_params(0.02, rng.range(0, 255));
    const QuantParams pr = make_params(0.07, rng.range(0, 255));
    const auto lhs = random_qtensor(rng, Shape{m, n}, pl);
    const auto rhs = random_qtensor(rng, Shape{n, k}, pr);
    const auto got = gemm_accumulators(lhs, rhs);
    const auto want = oracle::gemm_subtract_first(
        lhs.codes, rhs.codes, m, n, k, pl.zero_point, pr.zero_point);
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(static_cast<std::int64_t>(got[i]) == want[i]);
    }
  }
}

TEST_CASE("zero-point shift equivariance") {
  Rng rng(36);
  const QuantParams pl = make_params(0.03, 100);
  const QuantParams pr = make_params(0.04, 77);
  auto lhs = random_qtensor(rng, Shape{6, 5}, pl, 0, 254);
  const auto rhs = random_qtensor(rng, Shape{5, 6}, pr);
  FusedOutputStage stage;
  stage.bias.assign(6, 1234);
  stage.multiplier = normalize_multiplier(0.0007);
  stage.output_zero_point = 9;
  const QuantParams out = make_params(0.1, 9);
  const auto base = gemm_quantized(lhs, rhs, out, stage);

  QuantizedTensor shifted = lhs;
  shifted.params.zero_point += 1;
  for (auto& c : shifted.codes) c = static_cast<std::uint8_t>(c + 1);
  const auto moved = gemm_quantized(shifted, rhs, out, stage);
  CHECK(base.codes == moved.codes);
}

TEST_CASE("gemm_quantized stays within one code of the real computation") {
  Rng rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 4, n = 4, k = 4;
    const QuantParams pl = make_params(rng.uniform(0.005, 0.05),
                                       rng.range(0, 255));
    const QuantParams pr = make_params(rng.uniform(0.005, 0.05),
                                       rng.range(0, 255));
    const QuantParams out = make_params(rng.uniform(0.05, 0.2),
                                        rng.range(0, 255));
    const auto lhs = random_qtensor(rng, Shape{m, n}, pl);
    const auto rhs = random_qtensor(rng, Shape{n, k}, pr);
    FusedOutputStage stage;
    stage.bias.resize(m);
    for (auto& b : stage.bias) b = rng.range(-2000, 2000);
    stage.multiplier =
        normalize_multiplier(pl.scale * pr.scale / out.scale);
    stage.output_zero_point = out.zero_point;
    const auto got = gemm_quantized(lhs, rhs, out, stage);

    for (int i = 0; i < m; ++i) {
      for (int c = 0; c < k; ++c) {
        double real = 0.0;
        for (int j = 0; j < n; ++j) {
          real += dequantize(lhs.codes[i * n + j], pl) *
                  dequantize(rhs.codes[j * k + c], pr);
        }
        real += stage.bias[i] * pl.scale * pr.scale;
        const int want = quantize(real, out);
        CHECK(std::abs(static_cast<int>(got.codes[i * k + c]) - want) <= 1);
      }
    }
  }
}

TEST_CASE("full-range activation clamp changes nothing") {
  Rng rng(38);
  const QuantParams p = make_params(0.02, 12);
  const QuantParams out = make_params(6.0 / 255, 0);
  const auto lhs = random_qtensor(rng, Shape{4, 8}, p);
  const auto rhs = random_qtensor(rng, Shape{8, 5}, p);
  FusedOutputStage plain;
  plain.multiplier = normalize_multiplier(p.scale * p.scale / out.scale);
  plain.output_zero_point = out.zero_point;
  FusedOutputStage relu6 = plain;
  relu6.clamp_min = static_cast<std::uint8_t>(quantize(0.0, out));
  relu6.clamp_max = static_cast<std::uint8_t>(quantize(6.0, out));
  CHECK(relu6.clamp_min == 0);
  CHECK(relu6.clamp_max == 255);
  CHECK(gemm_quantized(lhs, rhs, out, plain).codes ==
        gemm_quantized(lhs, rhs, out, relu6).codes);
}

TEST_CASE("1x1 convolution is a matmul") {
  Rng rng(39);
  const QuantParams pi = make_params(0.02, 131);
  const QuantParams pw = make_params(0.01, 128);
  const QuantParams out = make_params(0.05, 3);
  const auto input = random_qtensor(rng, Shape{2, 5, 4, 3}, pi);
  const auto weights = random_qtensor(rng, Shape{6, 1, 1, 3}, pw, 1, 255);
  FusedOutputStage stage;
  stage.bias.assign(6, 100);
  stage.multiplier = normalize_multiplier(pi.scale * pw.scale / out.scale);
  stage.output_zero_point = out.zero_point;
  const auto conv =
      conv2d_quantized(input, weights, out, stage, 1, Padding::valid);

  QuantizedTensor wmat = weights;
  wmat.shape = Shape{6, 3};
  QuantizedTensor imat(Shape{3, 2 * 5 * 4}, pi);
  for (int pos = 0; pos < 2 * 5 * 4; ++pos) {
    for (int ch = 0; ch < 3; ++ch) {
      imat.codes[ch * (2 * 5 * 4) + pos] = input.codes[pos * 3 + ch];
    }
  }
  const auto mm = gemm_quantized(wmat, imat, out, stage);
  for (int pos = 0; pos < 2 * 5 * 4; ++pos) {
    for (int oc = 0; oc < 6; ++oc) {
      CHECK(conv.codes[pos * 6 + oc] == mm.codes[oc * (2 * 5 * 4) + pos]);
    }
  }
}

TEST_CASE("conv2d matches the 6-loop oracle bit-exactly") {
  Rng rng(40);
  for (Padding padding : {Padding::same, Padding::valid}) {
    for (int stride : {1, 2}) {
      const QuantParams pi = make_params(0.031, rng.range(0, 255));
      const QuantParams pw = make_params(0.017, 128);
      const QuantParams out = make_params(0.08, rng.range(0, 255));
      const auto input = random_qtensor(rng, Shape{2, 8, 8, 3}, pi);
      const auto weights = random_qtensor(rng, Shape{4, 3, 3, 3}, pw, 1, 255);
      FusedOutputStage stage;
      stage.bias.resize(4);
      for (auto& b : stage.bias) b = rng.range(-500, 500);
      stage.multiplier =
          normalize_multiplier(pi.scale * pw.scale / out.scale);
      stage.output_zero_point = out.zero_point;
      const auto got =
          conv2d_quantized(input, weights, out, stage, stride, padding);
      const auto acc = conv_oracle_acc(input, weights, stride, padding);
      REQUIRE(static_cast<std::size_t>(got.numel()) == acc.size());
      for (std::size_t i = 0; i < acc.size(); ++i) {
        const std::uint8_t want = apply_output_stage(
            static_cast<std::int32_t>(acc[i]), stage, stage.bias[i % 4]);
        CHECK(got.codes[i] == want);
      }
    }
  }
}

TEST_CASE("conv2d equals explicit im2col plus gemm") {
  Rng rng(41);
  const QuantParams pi = make_params(0.02, 99);
  const QuantParams pw = make_params(0.004, 128);
  const QuantParams out = make_params(0.06, 40);
  const auto input = random_qtensor(rng, Shape{1, 6, 7, 2}, pi);
  const auto weights = random_qtensor(rng, Shape{3, 3, 3, 2}, pw, 1, 255);
  FusedOutputStage stage;
  stage.multiplier = normalize_multiplier(pi.scale * pw.scale / out.scale);
  stage.output_zero_point = out.zero_point;
  const auto conv =
      conv2d_quantized(input, weights, out, stage, 1, Padding::same);
  const auto patches = im2col(input, 3, 3, 1, Padding::same);
  QuantizedTensor wmat = weights;
  wmat.shape = Shape{3, 18};
  const auto mm = gemm_quantized(wmat, patches, out, stage);
  const int cols = 6 * 7;
  for (int col = 0; col < cols; ++col) {
    for (int oc = 0; oc < 3; ++oc) {
      CHECK(conv.codes[col * 3 + oc] == mm.codes[oc * cols + col]);
    }
  }
}

TEST_CASE("conv2d of an all-zero-real input is the bias-only result") {
  Rng rng(42);
  const QuantParams pi = make_params(0.05, 120);
  const QuantParams pw = make_params(0.01, 128);
  const QuantParams out = make_params(0.04, 17);
  QuantizedTensor input(Shape{1, 5, 5, 2}, pi);  // all codes at zero_point
  const auto weights = random_qtensor(rng, Shape{3, 3, 3, 2}, pw, 1, 255);
  FusedOutputStage stage;
  stage.bias = {250, -700, 1300};
  stage.multiplier = normalize_multiplier(pi.scale * pw.scale / out.scale);
  stage.output_zero_point = out.zero_point;
  const auto got =
      conv2d_quantized(input, weights, out, stage, 1, Padding::same);
  for (std::int64_t i = 0; i < got.numel(); ++i) {
    const std::uint8_t want =
        apply_output_stage(0, stage, stage.bias[i % 3]);
    CHECK(got.codes[static_cast<std::size_t>(i)] == want);
  }
}

TEST_CASE("add of real zeros requantizes the other operand") {
  Rng rng(43);
  const QuantParams px = make_params(0.02, 50);
  const QuantParams py = make_params(0.03, 90);
  const QuantParams out = make_params(0.025, 60);
  const auto x = random_qtensor(rng, Shape{3, 17}, px);
  QuantizedTensor y(Shape{3, 17}, py);  // codes all at zero_point
  const auto got = add_quantized(x, y, out);
  for (std::size_t i = 0; i < x.codes.size(); ++i) {
    const int want = quantize(dequantize(x.codes[i], px), out);
    CHECK(std::abs(static_cast<int>(got.codes[i]) - want) <= 1);
  }
}

TEST_CASE("doubling the scale makes x + x an identity on codes") {
  Rng rng(44);
  const QuantParams px = make_params(0.02, 40);
  QuantParams out = px;
  out.scale = 2.0 * px.scale;
  const auto x = random_qtensor(rng, Shape{2, 100}, px);
  const auto got = add_quantized(x, x, out);
  CHECK(got.codes == x.codes);
}

TEST_CASE("add stays within one code of the real sum") {
  Rng rng(45);
  for (int trial = 0; trial < 40; ++trial) {
    const QuantParams px = make_params(rng.uniform(0.005, 0.05),
                                       rng.range(0, 255));
    const QuantParams py = make_params(rng.uniform(0.005, 0.05),
                                       rng.range(0, 255));
    const QuantParams out = make_params(rng.uniform(0.01, 0.1),
                                        rng.range(0, 255));
    const auto x = random_qtensor(rng, Shape{4, 25}, px);
    const auto y = random_qtensor(rng, Shape{4, 25}, py);
    const auto got = add_quantized(x, y, out);
    for (std::size_t i = 0; i < x.codes.size(); ++i) {
      const int want = quantize(
          dequantize(x.codes[i], px) + dequantize(y.codes[i], py), out);
      CHECK(std::abs(static_cast<int>(got.codes[i]) - want) <= 1);
    }
  }
}

TEST_CASE("add shape mismatch throws") {
  const QuantParams p = make_params(0.1, 0);
  QuantizedTensor a(Shape{2, 3}, p), b(Shape{3, 2}, p);
  CHECK_THROWS_AS(add_quantized(a, b, p), std::invalid_argument);
}

TEST_CASE("concat is a lossless juxtaposition") {
  Rng rng(46);
  const QuantParams p = make_params(0.02, 64);
  const auto a = random_qtensor(rng, Shape{2, 3, 4, 2}, p);
  const auto b = random_qtensor(rng, Shape{2, 3, 4, 5}, p);

  const auto single = concat_quantized({&a}, 3);
  CHECK(single.codes == a.codes);
  CHECK(single.shape == a.shape);

  const auto both = concat_quantized({&a, &b}, 3);
  CHECK(both.shape == Shape{2, 3, 4, 7});
  for (int outer = 0; outer < 2 * 3 * 4; ++outer) {
    for (int c = 0; c < 2; ++c) {
      CHECK(both.codes[outer * 7 + c] == a.codes[outer * 2 + c]);
    }
    for (int c = 0; c < 5; ++c) {
      CHECK(both.codes[outer * 7 + 2 + c] == b.codes[outer * 5 + c]);
    }
  }
}

TEST_CASE("concat with mismatched parameters throws") {
  const QuantParams p = make_params(0.02, 64);
  QuantParams q = p;
  q.scale = 0.021;
  QuantizedTensor a(Shape{1, 4}, p), b(Shape{1, 4}, q);
  CHECK_THROWS_AS(concat_quantized({&a, &b}, 1), std::invalid_argument);
}
