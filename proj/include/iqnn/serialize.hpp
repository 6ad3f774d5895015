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
#include <string>
#include <vector>

#include "iqnn/convert.hpp"
#include "iqnn/graph.hpp"
#include "iqnn/io.hpp"

// Flat, versioned, little-endian model files.
//
// IQM1 (integer model): header, one integer-only record per op, then a
// trailing metadata section holding the only floating-point values in the
// file (the scales, needed to quantize external inputs and for reports).
//
// IQF1 (float model): the training-side graph with f32 weight payloads and
// the learned ranges, structured to mirror IQM1.

namespace iqnn {

inline constexpr std::uint16_t kModelFormatVersion = 1;

namespace detail {

// Caps for fields read from untrusted files, so a corrupted length cannot
// force a huge allocation before validation fails.
inline int checked_dim(std::uint32_t v) {
  if (v == 0 || v > (1u << 20)) {
    throw DataError("unreasonable tensor dimension in model file");
  }
  return static_cast<int>(v);
}

inline std::size_t checked_count(std::uint32_t v) {
  if (v > (1u << 26)) {
    throw DataError("unreasonable element count in model file");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace detail

// ---- IQM1 ---------------------------------------------------------------

inline std::vector<std::uint8_t> save_model(const QuantGraph& g) {
  ByteWriter w;
  w.bytes("IQM1", 4);
  w.u16(kModelFormatVersion);
  w.u16(static_cast<std::uint16_t>(g.ops.size()));
  w.u8(static_cast<std::uint8_t>(g.input_params.zero_point));
  w.u8(static_cast<std::uint8_t>(g.activation_bits));
  w.u8(static_cast<std::uint8_t>(g.weight_bits));
  w.u16(static_cast<std::uint16_t>(g.input_h));
  w.u16(static_cast<std::uint16_t>(g.input_w));
  w.u16(static_cast<std::uint16_t>(g.input_c));
  w.u16(static_cast<std::uint16_t>(g.num_classes));
  for (const QOp& op : g.ops) {
    w.u8(static_cast<std::uint8_t>(op.opcode));
    if (op.opcode == QOpCode::dense || op.opcode == QOpCode::conv2d) {
      w.u8(static_cast<std::uint8_t>(op.weights.shape.size()));
      for (int d : op.weights.shape) w.u32(static_cast<std::uint32_t>(d));
      if (op.opcode == QOpCode::conv2d) {
        w.u8(static_cast<std::uint8_t>(op.stride));
        w.u8(op.padding == Padding::same ? 1 : 0);
      }
      w.bytes(op.weights.codes.data(), op.weights.codes.size());
      w.u8(static_cast<std::uint8_t>(op.weights.params.zero_point));
      w.u32(static_cast<std::uint32_t>(op.stage.bias.size()));
      for (std::int32_t b : op.stage.bias) w.i32(b);
      w.i32(op.stage.multiplier.m0_raw);
      w.u8(static_cast<std::uint8_t>(op.stage.multiplier.shift));
      w.u8(op.stage.clamp_min);
      w.u8(op.stage.clamp_max);
    } else if (op.opcode == QOpCode::add) {
      w.u16(static_cast<std::uint16_t>(op.bypass_from));
      w.i32(op.add_stage.lhs_multiplier.m0_raw);
      w.u8(static_cast<std::uint8_t>(op.add_stage.lhs_multiplier.shift));
      w.i32(op.add_stage.rhs_multiplier.m0_raw);
      w.u8(static_cast<std::uint8_t>(op.add_stage.rhs_multiplier.shift));
      w.i32(op.add_stage.out_multiplier.m0_raw);
      w.u8(static_cast<std::uint8_t>(op.add_stage.out_multiplier.shift));
      w.u8(op.add_stage.clamp_min);
      w.u8(op.add_stage.clamp_max);
    } else {  // concat
      w.u16(static_cast<std::uint16_t>(op.bypass_from));
    }
    w.u8(static_cast<std::uint8_t>(op.in_params.zero_point));
    w.u8(static_cast<std::uint8_t>(op.out_params.zero_point));
  }
  // Trailing metadata: every scale in the model, floats only here.
  w.f32(static_cast<float>(g.input_params.scale));
  for (const QOp& op : g.ops) {
    w.f32(static_cast<float>(op.out_params.scale));
    const bool has_weights = op.opcode == QOpCode::dense ||
                             op.opcode == QOpCode::conv2d;
    w.f32(has_weights ? static_cast<float>(op.weights.params.scale) : 0.0f);
  }
  return w.data();
}

inline void save_model_file(const QuantGraph& g, const std::string& path) {
  ByteWriter w;
  const auto bytes = save_model(g);
  w.bytes(bytes.data(), bytes.size());
  w.write_file(path);
}

inline QuantGraph load_model(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "IQM1") {
    throw DataError("not an integer model file (bad magic)");
  }
  const std::uint16_t version = r.u16();
  if (version != kModelFormatVersion) {
    throw DataError("unsupported model version " + std::to_string(version));
  }
  QuantGraph g;
  const std::uint16_t op_count = r.u16();
  const std::uint8_t input_zp = r.u8();
  g.activation_bits = r.u8();
  g.weight_bits = r.u8();
  g.input_h = r.u16();
  g.input_w = r.u16();
  g.input_c = r.u16();
  g.num_classes = r.u16();
  if (g.activation_bits < 2 || g.activation_bits > 8 || g.weight_bits < 2 ||
      g.weight_bits > 8) {
    throw DataError("model header has invalid bit depths");
  }
  g.input_params.zero_point = input_zp;
  g.input_params.bits = g.activation_bits;
  for (int i = 0; i < op_count; ++i) {
    QOp op;
    const auto opcode = r.u8();
    if (opcode < 1 || opcode > 4) {
      throw DataError("unknown opcode " + std::to_string(opcode));
    }
    op.opcode = static_cast<QOpCode>(opcode);
    if (op.opcode == QOpCode::dense || op.opcode == QOpCode::conv2d) {
      const std::uint8_t ndims = r.u8();
      if ((op.opcode == QOpCode::dense && ndims != 2) ||
          (op.opcode == QOpCode::conv2d && ndims != 4)) {
        throw DataError("bad weight rank in op " + std::to_string(i));
      }
      Shape shape(ndims);
      for (auto& d : shape) d = detail::checked_dim(r.u32());
      if (shape_numel(shape) > (1 << 26)) {
        throw DataError("unreasonable weight size in op " + std::to_string(i));
      }
      if (op.opcode == QOpCode::conv2d) {
        op.stride = r.u8();
        op.padding = r.u8() != 0 ? Padding::same : Padding::valid;
        if (op.stride < 1) throw DataError("bad stride");
      }
      op.weights.shape = shape;
      op.weights.codes.resize(
          static_cast<std::size_t>(shape_numel(shape)));
      r.bytes(op.weights.codes.data(), op.weights.codes.size());
      op.weights.params.zero_point = r.u8();
      op.weights.params.bits = g.weight_bits;
      const std::size_t bias_len = detail::checked_count(r.u32());
      if (bias_len != static_cast<std::size_t>(shape[0])) {
        throw DataError("bias length mismatch in op " + std::to_string(i));
      }
      op.stage.bias.resize(bias_len);
      for (auto& b : op.stage.bias) b = r.i32();
      op.stage.multiplier.m0_raw = r.i32();
      op.stage.multiplier.shift = r.u8();
      op.stage.clamp_min = r.u8();
      op.stage.clamp_max = r.u8();
      if (op.stage.multiplier.m0_raw < (1 << 30)) {
        throw DataError("unnormalized multiplier in op " + std::to_string(i));
      }
    } else if (op.opcode == QOpCode::add) {
      op.bypass_from = r.u16();
      op.add_stage.lhs_multiplier.m0_raw = r.i32();
      op.add_stage.lhs_multiplier.shift = r.u8();
      op.add_stage.rhs_multiplier.m0_raw = r.i32();
      op.add_stage.rhs_multiplier.shift = r.u8();
      op.add_stage.out_multiplier.m0_raw = r.i32();
      op.add_stage.out_multiplier.shift = r.u8();
      op.add_stage.clamp_min = r.u8();
      op.add_stage.clamp_max = r.u8();
    } else {
      op.bypass_from = r.u16();
    }
    if (op.bypass_from >= i && op.bypass_from != -1) {
      throw DataError("bypass reference ahead of op " + std::to_string(i));
    }
    op.in_params.zero_point = r.u8();
    op.in_params.bits = g.activation_bits;
    op.out_params.zero_point = r.u8();
    op.out_params.bits = g.activation_bits;
    g.ops.push_back(std::move(op));
  }
  // Metadata section.
  g.input_params.scale = static_cast<double>(r.f32());
  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    QOp& op = g.ops[i];
    op.out_params.scale = static_cast<double>(r.f32());
    const float w_scale = r.f32();
    if (op.opcode == QOpCode::dense || op.opcode == QOpCode::conv2d) {
      op.weights.params.scale = static_cast<double>(w_scale);
    }
    op.in_params.scale = i == 0 ? g.input_params.scale
                                : g.ops[i - 1].out_params.scale;
    if (!(op.out_params.scale > 0.0) ||
        ((op.opcode == QOpCode::dense || op.opcode == QOpCode::conv2d) &&
         !(op.weights.params.scale > 0.0))) {
      throw DataError("non-positive scale in op " + std::to_string(i));
    }
  }
  // Reconstruct add-stage zero points from the neighbouring params.
  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    QOp& op = g.ops[i];
    if (op.opcode == QOpCode::add) {
      op.add_stage.lhs_zero_point = op.in_params.zero_point;
      op.add_stage.rhs_zero_point =
          g.ops[static_cast<std::size_t>(op.bypass_from)]
              .out_params.zero_point;
      op.add_stage.output_zero_point = op.out_params.zero_point;
    } else if (op.opcode == QOpCode::dense || op.opcode == QOpCode::conv2d) {
      op.stage.output_zero_point = op.out_params.zero_point;
    }
  }
  r.expect_end();
  return g;
}

inline QuantGraph load_model_file(const std::string& path) {
  return load_model(read_file(path));
}

// ---- IQF1 ---------------------------------------------------------------

inline void save_float_graph(const FloatGraph& g, const std::string& path) {
  ByteWriter w;
  w.bytes("IQF1", 4);
  w.u16(kModelFormatVersion);
  w.u16(static_cast<std::uint16_t>(g.layers.size()));
  w.u16(static_cast<std::uint16_t>(g.input_h));
  w.u16(static_cast<std::uint16_t>(g.input_w));
  w.u16(static_cast<std::uint16_t>(g.input_c));
  w.u16(static_cast<std::uint16_t>(g.num_classes));
  w.u8(static_cast<std::uint8_t>(g.weight_bits));
  w.u8(static_cast<std::uint8_t>(g.activation_bits));
  w.u8(g.has_input_range ? 1 : 0);
  w.f64(g.input_range_min);
  w.f64(g.input_range_max);
  for (const Layer& l : g.layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u8(l.with_bias ? 1 : 0);
    w.i32(l.units);
    w.u8(static_cast<std::uint8_t>(l.kernel_h));
    w.u8(static_cast<std::uint8_t>(l.kernel_w));
    w.u8(static_cast<std::uint8_t>(l.stride));
    w.u8(l.padding == Padding::same ? 1 : 0);
    w.i32(l.bypass_from);
    w.u8(static_cast<std::uint8_t>(l.weights.shape.size()));
    for (int d : l.weights.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : l.weights.v) w.f32(static_cast<float>(v));
    w.u32(static_cast<std::uint32_t>(l.bias.size()));
    for (double v : l.bias) w.f32(static_cast<float>(v));
    const bool has_bn = l.kind == LayerKind::batch_norm;
    w.u8(has_bn ? 1 : 0);
    if (has_bn) {
      w.u32(static_cast<std::uint32_t>(l.bn.gamma.size()));
      for (double v : l.bn.gamma) w.f32(static_cast<float>(v));
      for (double v : l.bn.beta) w.f32(static_cast<float>(v));
      for (double v : l.bn.ema_mean) w.f32(static_cast<float>(v));
      for (double v : l.bn.ema_var) w.f32(static_cast<float>(v));
      w.f64(l.bn.epsilon);
    }
    w.u8(l.has_range ? 1 : 0);
    w.f64(l.range_min);
    w.f64(l.range_max);
  }
  w.write_file(path);
}

inline FloatGraph load_float_graph(const std::string& path) {
  ByteReader r(read_file(path));
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "IQF1") {
    throw DataError("not a float model file (bad magic): " + path);
  }
  const std::uint16_t version = r.u16();
  if (version != kModelFormatVersion) {
    throw DataError("unsupported float model version " +
                    std::to_string(version));
  }
  FloatGraph g;
  const std::uint16_t layer_count = r.u16();
  g.input_h = r.u16();
  g.input_w = r.u16();
  g.input_c = r.u16();
  g.num_classes = r.u16();
  g.weight_bits = r.u8();
  g.activation_bits = r.u8();
  g.has_input_range = r.u8() != 0;
  g.input_range_min = r.f64();
  g.input_range_max = r.f64();
  for (int i = 0; i < layer_count; ++i) {
    Layer l;
    const std::uint8_t kind = r.u8();
    if (kind < 1 || kind > 8) {
      throw DataError("unknown layer kind in layer " + std::to_string(i));
    }
    l.kind = static_cast<LayerKind>(kind);
    l.with_bias = r.u8() != 0;
    l.units = r.i32();
    l.kernel_h = r.u8();
    l.kernel_w = r.u8();
    l.stride = r.u8();
    l.padding = r.u8() != 0 ? Padding::same : Padding::valid;
    l.bypass_from = r.i32();
    const std::uint8_t ndims = r.u8();
    if (ndims > 4) {
      throw DataError("unreasonable weight rank in layer " +
                      std::to_string(i));
    }
    Shape shape(ndims);
    for (auto& d : shape) d = detail::checked_dim(r.u32());
    if (ndims > 0 && shape_numel(shape) > (1 << 26)) {
      throw DataError("unreasonable weight size in layer " +
                      std::to_string(i));
    }
    l.weights.shape = shape;
    l.weights.v.resize(
        ndims == 0 ? 0 : static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : l.weights.v) v = static_cast<double>(r.f32());
    const std::size_t bias_len = detail::checked_count(r.u32());
    l.bias.resize(bias_len);
    for (auto& v : l.bias) v = static_cast<double>(r.f32());
    if (r.u8() != 0) {
      const std::size_t channels = detail::checked_count(r.u32());
      l.bn.gamma.resize(channels);
      l.bn.beta.resize(channels);
      l.bn.ema_mean.resize(channels);
      l.bn.ema_var.resize(channels);
      for (auto& v : l.bn.gamma) v = static_cast<double>(r.f32());
      for (auto& v : l.bn.beta) v = static_cast<double>(r.f32());
      for (auto& v : l.bn.ema_mean) v = static_cast<double>(r.f32());
      for (auto& v : l.bn.ema_var) v = static_cast<double>(r.f32());
      l.bn.epsilon = r.f64();
      l.bn.initialized = true;
    }
    l.has_range = r.u8() != 0;
    l.range_min = r.f64();
    l.range_max = r.f64();
    g.layers.push_back(std::move(l));
  }
  r.expect_end();
  try {
    analyze_graph(g);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid model structure: ") + e.what());
  }
  return g;
}

}  // namespace iqnn
