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

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "iqnn/quantization.hpp"

namespace iqnn {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape");
    n *= d;
  }
  return n;
}

// Dense real-valued tensor. Training and the float simulation run in
// double precision; 32-bit floats appear only in file formats.
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)) {
    v.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  }
  Tensor(Shape s, std::vector<double> data)
      : shape(std::move(s)), v(std::move(data)) {
    if (static_cast<std::int64_t>(v.size()) != shape_numel(shape)) {
      throw std::invalid_argument("tensor data does not match shape");
    }
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
};

// An 8-bit code array with its shape and quantization parameters.
struct QuantizedTensor {
  std::vector<std::uint8_t> codes;
  Shape shape;
  QuantParams params;

  QuantizedTensor() = default;
  QuantizedTensor(Shape s, QuantParams p)
      : shape(std::move(s)), params(p) {
    codes.assign(static_cast<std::size_t>(shape_numel(shape)),
                 static_cast<std::uint8_t>(p.zero_point));
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(codes.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
};

// Elementwise quantization of a real tensor.
inline QuantizedTensor quantize_tensor(const Tensor& t, const QuantParams& p) {
  QuantizedTensor out(t.shape, p);
  for (std::size_t i = 0; i < t.v.size(); ++i) {
    out.codes[i] = static_cast<std::uint8_t>(quantize(t.v[i], p));
  }
  return out;
}

// Weight-tensor quantization: codes are clamped to [1, 2^bits - 1] so the
// signed view never takes the most negative value.
inline QuantizedTensor quantize_weight_tensor(const Tensor& t,
                                              const QuantParams& p) {
  QuantizedTensor out(t.shape, p);
  for (std::size_t i = 0; i < t.v.size(); ++i) {
    std::int32_t code = quantize(t.v[i], p);
    if (code < 1) code = 1;
    out.codes[i] = static_cast<std::uint8_t>(code);
  }
  return out;
}

inline Tensor dequantize_tensor(const QuantizedTensor& t) {
  Tensor out(t.shape);
  for (std::size_t i = 0; i < t.codes.size(); ++i) {
    out.v[i] = dequantize(t.codes[i], t.params);
  }
  return out;
}

}  // namespace iqnn
