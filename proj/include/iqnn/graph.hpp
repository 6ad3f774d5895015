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

#include "iqnn/kernels.hpp"
#include "iqnn/rng.hpp"
#include "iqnn/tensor.hpp"

// The float-side model representation: an ordered layer list with weights,
// batch-norm state, and the activation ranges learned during training.

namespace iqnn {

enum class LayerKind : std::uint8_t {
  dense = 1,
  conv2d = 2,
  batch_norm = 3,
  relu = 4,
  relu6 = 5,
  add_bypass = 6,
  concat_bypass = 7,
  softmax = 8,
};

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::relu: return "relu";
    case LayerKind::relu6: return "relu6";
    case LayerKind::add_bypass: return "add_bypass";
    case LayerKind::concat_bypass: return "concat_bypass";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

struct BatchNormParams {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> ema_mean;
  std::vector<double> ema_var;
  double epsilon = 1e-5;
  bool initialized = false;  // set once the first batch statistics land
};

struct Layer {
  LayerKind kind = LayerKind::dense;
  // dense: units = output features; conv2d: units = output channels.
  int units = 0;
  int kernel_h = 0, kernel_w = 0;
  int stride = 1;
  Padding padding = Padding::same;
  int bypass_from = -1;  // add/concat: index of the producing layer
  bool with_bias = true;

  Tensor weights;             // dense {O, F}; conv {O, KH, KW, C}
  std::vector<double> bias;   // empty when a batch_norm follows
  BatchNormParams bn;         // kind == batch_norm

  // Learned activation range of the fused group ending at this layer.
  bool has_range = false;
  double range_min = 0.0;
  double range_max = 0.0;
};

struct FloatGraph {
  int input_h = 1, input_w = 1, input_c = 1;
  int num_classes = 2;
  int weight_bits = 8;
  int activation_bits = 8;
  bool has_input_range = false;
  double input_range_min = 0.0;
  double input_range_max = 0.0;
  std::vector<Layer> layers;
};

// One executable step: a dense/conv/add/concat layer together with the
// batch-norm and clamp layers fused into it. Every unit ends at an
// activation-quantization site.
struct ExecUnit {
  LayerKind op = LayerKind::dense;
  int main = -1;
  int bn = -1;
  int act = -1;   // relu/relu6 layer index, or -1
  int end = -1;   // layer whose range field belongs to this unit
  int site = -1;  // site index; site 0 is the network input
  int bypass_unit = -1;
  Shape in_shape;   // per-sample, no batch dimension
  Shape out_shape;
};

struct GraphPlan {
  std::vector<ExecUnit> units;
  int num_sites = 1;  // input site included
  bool has_softmax = false;
};

namespace detail {

inline std::invalid_argument graph_error(int layer, const std::string& msg) {
  return std::invalid_argument("layer " + std::to_string(layer) + ": " + msg);
}

}  // namespace detail

// Validates the layer sequence and derives the fused execution plan with
// per-unit shapes. Throws std::invalid_argument on unsupported structure.
inline GraphPlan analyze_graph(const FloatGraph& g) {
  GraphPlan plan;
  Shape cur = {g.input_h, g.input_w, g.input_c};
  std::vector<int> end_layer_to_unit(g.layers.size(), -1);

  const auto channels_of = [](const Shape& s) {
    return s.empty() ? 0 : s.back();
  };

  for (int i = 0; i < static_cast<int>(g.layers.size()); ++i) {
    const Layer& layer = g.layers[static_cast<std::size_t>(i)];
    if (plan.has_softmax) {
      throw detail::graph_error(i, "softmax must be the last layer");
    }
    switch (layer.kind) {
      case LayerKind::dense: {
        ExecUnit u;
        u.op = LayerKind::dense;
        u.main = u.end = i;
        u.in_shape = cur;
        u.out_shape = Shape{layer.units};
        cur = u.out_shape;
        plan.units.push_back(u);
        break;
      }
      case LayerKind::conv2d: {
        if (cur.size() != 3) {
          throw detail::graph_error(i, "conv2d needs an image-shaped input");
        }
        ExecUnit u;
        u.op = LayerKind::conv2d;
        u.main = u.end = i;
        u.in_shape = cur;
        const Conv2dGeometry geo =
            conv2d_geometry(cur[0], cur[1], layer.kernel_h, layer.kernel_w,
                            layer.stride, layer.padding);
        u.out_shape = Shape{geo.out_h, geo.out_w, layer.units};
        cur = u.out_shape;
        plan.units.push_back(u);
        break;
      }
      case LayerKind::batch_norm: {
        if (plan.units.empty()) {
          throw detail::graph_error(i, "batch_norm has no preceding layer");
        }
        ExecUnit& u = plan.units.back();
        if ((u.op != LayerKind::dense && u.op != LayerKind::conv2d) ||
            u.bn != -1 || u.act != -1 || u.end != i - 1) {
          throw detail::graph_error(
              i, "batch_norm must directly follow dense or conv2d");
        }
        if (g.layers[static_cast<std::size_t>(u.main)].with_bias) {
          throw detail::graph_error(
              i, "a layer followed by batch_norm must not have a bias");
        }
        u.bn = i;
        u.end = i;
        break;
      }
      case LayerKind::relu:
      case LayerKind::relu6: {
        if (plan.units.empty()) {
          throw detail::graph_error(i, "clamp has no preceding layer");
        }
        ExecUnit& u = plan.units.back();
        if (u.act != -1 || u.end != i - 1 ||
            u.op == LayerKind::concat_bypass) {
          throw detail::graph_error(i, "clamp must directly follow a dense, "
                                       "conv2d, batch_norm or add layer");
        }
        u.act = i;
        u.end = i;
        break;
      }
      case LayerKind::add_bypass:
      case LayerKind::concat_bypass: {
        const int from = layer.bypass_from;
        if (from < 0 || from >= i ||
            end_layer_to_unit[static_cast<std::size_t>(from)] < 0) {
          throw detail::graph_error(
              i, "bypass must reference the end of an earlier unit");
        }
        const int src_unit = end_layer_to_unit[static_cast<std::size_t>(from)];
        const Shape& src = plan.units[static_cast<std::size_t>(src_unit)]
                               .out_shape;
        ExecUnit u;
        u.op = layer.kind;
        u.main = u.end = i;
        u.bypass_unit = src_unit;
        u.in_shape = cur;
        if (layer.kind == LayerKind::add_bypass) {
          if (src != cur) {
            throw detail::graph_error(i, "add operands must match in shape");
          }
          u.out_shape = cur;
        } else {
          if (src.size() != cur.size() || src.size() < 1) {
            throw detail::graph_error(i, "concat rank mismatch");
          }
          for (std::size_t d = 0; d + 1 < src.size(); ++d) {
            if (src[d] != cur[d]) {
              throw detail::graph_error(i, "concat off-axis shape mismatch");
            }
          }
          Shape out = cur;
          out.back() = channels_of(cur) + channels_of(src);
          u.out_shape = out;
        }
        cur = u.out_shape;
        plan.units.push_back(u);
        break;
      }
      case LayerKind::softmax: {
        if (cur.size() != 1 || cur[0] != g.num_classes) {
          throw detail::graph_error(
              i, "softmax requires logits of num_classes features");
        }
        plan.has_softmax = true;
        break;
      }
      default:
        throw detail::graph_error(i, "unsupported layer kind");
    }
    if (!plan.units.empty() && layer.kind != LayerKind::softmax) {
      end_layer_to_unit[static_cast<std::size_t>(plan.units.back().end)] =
          static_cast<int>(plan.units.size()) - 1;
    }
  }
  if (plan.units.empty()) {
    throw std::invalid_argument("graph has no layers");
  }
  for (std::size_t i = 0; i < plan.units.size(); ++i) {
    plan.units[i].site = static_cast<int>(i) + 1;
  }
  plan.num_sites = static_cast<int>(plan.units.size()) + 1;
  return plan;
}

inline std::int64_t flat_features(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

// Sizes and initializes every parameter tensor in place (He-uniform
// weights, zero biases, identity batch-norm).
inline void init_parameters(FloatGraph& g, std::uint64_t seed) {
  const GraphPlan plan = analyze_graph(g);
  Rng rng(seed, 0x77);
  for (const ExecUnit& u : plan.units) {
    Layer& layer = g.layers[static_cast<std::size_t>(u.main)];
    if (u.op == LayerKind::dense) {
      const int fan_in = static_cast<int>(flat_features(u.in_shape));
      layer.weights = Tensor(Shape{layer.units, fan_in});
      const double limit = std::sqrt(6.0 / fan_in);
      for (auto& v : layer.weights.v) v = rng.uniform(-limit, limit);
      layer.bias.assign(
          layer.with_bias ? static_cast<std::size_t>(layer.units) : 0, 0.0);
    } else if (u.op == LayerKind::conv2d) {
      const int c = u.in_shape[2];
      const int fan_in = layer.kernel_h * layer.kernel_w * c;
      layer.weights =
          Tensor(Shape{layer.units, layer.kernel_h, layer.kernel_w, c});
      const double limit = std::sqrt(6.0 / fan_in);
      for (auto& v : layer.weights.v) v = rng.uniform(-limit, limit);
      layer.bias.assign(
          layer.with_bias ? static_cast<std::size_t>(layer.units) : 0, 0.0);
    }
    if (u.bn >= 0) {
      Layer& bn_layer = g.layers[static_cast<std::size_t>(u.bn)];
      const auto ch = static_cast<std::size_t>(u.out_shape.back());
      bn_layer.bn.gamma.assign(ch, 1.0);
      bn_layer.bn.beta.assign(ch, 0.0);
      bn_layer.bn.ema_mean.assign(ch, 0.0);
      bn_layer.bn.ema_var.assign(ch, 1.0);
      bn_layer.bn.initialized = false;
    }
  }
}

// ---- model presets ----------------------------------------------------

inline Layer dense_layer(int units, bool with_bias = true) {
  Layer l;
  l.kind = LayerKind::dense;
  l.units = units;
  l.with_bias = with_bias;
  return l;
}

inline Layer conv_layer(int channels, int kernel, int stride, Padding padding,
                        bool with_bias = true) {
  Layer l;
  l.kind = LayerKind::conv2d;
  l.units = channels;
  l.kernel_h = kernel;
  l.kernel_w = kernel;
  l.stride = stride;
  l.padding = padding;
  l.with_bias = with_bias;
  return l;
}

inline Layer plain_layer(LayerKind kind) {
  Layer l;
  l.kind = kind;
  return l;
}

inline Layer bypass_layer(LayerKind kind, int from) {
  Layer l;
  l.kind = kind;
  l.bypass_from = from;
  return l;
}

// dense(hidden) -> relu -> dense(classes) -> softmax
inline FloatGraph make_mlp(int input_features, int hidden, int classes) {
  FloatGraph g;
  g.input_c = input_features;
  g.num_classes = classes;
  g.layers = {dense_layer(hidden), plain_layer(LayerKind::relu),
              dense_layer(classes), plain_layer(LayerKind::softmax)};
  return g;
}

// Two hidden layers, the first batch-normalized.
inline FloatGraph make_mlp2(int input_features, int hidden, int classes,
                            bool with_bn) {
  FloatGraph g;
  g.input_c = input_features;
  g.num_classes = classes;
  g.layers.push_back(dense_layer(hidden, !with_bn));
  if (with_bn) g.layers.push_back(plain_layer(LayerKind::batch_norm));
  g.layers.push_back(plain_layer(LayerKind::relu6));
  g.layers.push_back(dense_layer(hidden));
  g.layers.push_back(plain_layer(LayerKind::relu));
  g.layers.push_back(dense_layer(classes));
  g.layers.push_back(plain_layer(LayerKind::softmax));
  return g;
}

// conv-bn-relu6, strided conv-relu, dense head.
inline FloatGraph make_convnet(int h, int w, int c, int channels,
                               int classes) {
  FloatGraph g;
  g.input_h = h;
  g.input_w = w;
  g.input_c = c;
  g.num_classes = classes;
  g.layers = {conv_layer(channels, 3, 1, Padding::same, false),
              plain_layer(LayerKind::batch_norm),
              plain_layer(LayerKind::relu6),
              conv_layer(channels, 3, 2, Padding::same),
              plain_layer(LayerKind::relu),
              dense_layer(classes),
              plain_layer(LayerKind::softmax)};
  return g;
}

// Residual block: conv-relu6, conv, add back, relu6, dense head.
inline FloatGraph make_resmini(int h, int w, int c, int channels,
                               int classes) {
  FloatGraph g;
  g.input_h = h;
  g.input_w = w;
  g.input_c = c;
  g.num_classes = classes;
  g.layers = {conv_layer(channels, 3, 1, Padding::same),
              plain_layer(LayerKind::relu6),
              conv_layer(channels, 3, 1, Padding::same),
              bypass_layer(LayerKind::add_bypass, 1),
              plain_layer(LayerKind::relu6),
              dense_layer(classes),
              plain_layer(LayerKind::softmax)};
  return g;
}

// Two stacked conv stages whose outputs are concatenated along channels.
inline FloatGraph make_catnet(int h, int w, int c, int channels,
                              int classes) {
  FloatGraph g;
  g.input_h = h;
  g.input_w = w;
  g.input_c = c;
  g.num_classes = classes;
  g.layers = {conv_layer(channels, 3, 1, Padding::same),
              plain_layer(LayerKind::relu6),
              conv_layer(channels, 3, 1, Padding::same),
              plain_layer(LayerKind::relu6),
              bypass_layer(LayerKind::concat_bypass, 1),
              dense_layer(classes),
              plain_layer(LayerKind::softmax)};
  return g;
}

}  // namespace iqnn
