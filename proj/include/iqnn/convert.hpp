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
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "iqnn/graph.hpp"
#include "iqnn/kernels.hpp"
#include "iqnn/train.hpp"

// Lowers a trained float graph into a fully integer inference graph: batch
// norms folded, weights and biases quantized, every output stage reduced to
// integer constants. After conversion no floating-point value is read on
// the inference path; scales ride along as metadata for quantizing external
// inputs and for reports.

namespace iqnn {

enum class QOpCode : std::uint8_t {
  dense = 1,
  conv2d = 2,
  add = 3,
  concat = 4,
};

inline const char* qop_name(QOpCode op) {
  switch (op) {
    case QOpCode::dense: return "dense";
    case QOpCode::conv2d: return "conv2d";
    case QOpCode::add: return "add";
    case QOpCode::concat: return "concat";
  }
  return "?";
}

struct QOp {
  QOpCode opcode = QOpCode::dense;
  QuantizedTensor weights;  // dense {O, F}; conv2d OHWI
  FusedOutputStage stage;
  int stride = 1;
  Padding padding = Padding::same;
  AddStage add_stage;
  int bypass_from = -1;  // producing op index for add/concat
  QuantParams in_params;
  QuantParams out_params;
};

struct QuantGraph {
  int input_h = 1, input_w = 1, input_c = 1;
  int num_classes = 2;
  int weight_bits = 8;
  int activation_bits = 8;
  QuantParams input_params;
  std::vector<QOp> ops;
  // Human-readable conversion events (range harmonization etc.); not part
  // of the serialized model.
  std::vector<std::string> notes;
};

// Converts the trained float graph. Throws std::invalid_argument when a
// learned range is missing or a layer's multiplier falls outside (0, 1).
inline QuantGraph convert(const FloatGraph& g) {
  const GraphPlan plan = analyze_graph(g);
  QuantGraph qg;
  qg.input_h = g.input_h;
  qg.input_w = g.input_w;
  qg.input_c = g.input_c;
  qg.num_classes = g.num_classes;
  qg.weight_bits = g.weight_bits;
  qg.activation_bits = g.activation_bits;

  // Raw learned ranges per site.
  if (!g.has_input_range) {
    throw std::invalid_argument("convert: graph has no learned input range");
  }
  std::vector<std::pair<double, double>> ranges(
      static_cast<std::size_t>(plan.num_sites));
  ranges[0] = {g.input_range_min, g.input_range_max};
  for (const ExecUnit& u : plan.units) {
    const Layer& end = g.layers[static_cast<std::size_t>(u.end)];
    if (!end.has_range) {
      throw std::invalid_argument("convert: missing learned range for layer " +
                                  std::to_string(u.end));
    }
    ranges[static_cast<std::size_t>(u.site)] = {end.range_min, end.range_max};
  }

  // Concatenation inputs must share the output's parameters; widen every
  // range in the group to their union. This loses resolution when the
  // upstream ranges differ, which is recorded as a note.
  for (std::size_t ui = 0; ui < plan.units.size(); ++ui) {
    const ExecUnit& u = plan.units[ui];
    if (u.op != LayerKind::concat_bypass) continue;
    const int site_prev = ui == 0 ? 0 : plan.units[ui - 1].site;
    const int site_bypass =
        plan.units[static_cast<std::size_t>(u.bypass_unit)].site;
    const int site_out = u.site;
    const auto lo = std::min({ranges[site_prev].first,
                              ranges[site_bypass].first,
                              ranges[site_out].first});
    const auto hi = std::max({ranges[site_prev].second,
                              ranges[site_bypass].second,
                              ranges[site_out].second});
    std::ostringstream note;
    note << "concat at op " << ui << ": harmonized sites " << site_prev
         << ", " << site_bypass << ", " << site_out << " to range [" << lo
         << ", " << hi << "]";
    qg.notes.push_back(note.str());
    ranges[site_prev] = ranges[site_bypass] = ranges[site_out] = {lo, hi};
  }

  std::vector<QuantParams> site_params(ranges.size());
  for (std::size_t s = 0; s < ranges.size(); ++s) {
    site_params[s] =
        choose_params(ranges[s].first, ranges[s].second, g.activation_bits)
            .params;
  }
  qg.input_params = site_params[0];

  for (std::size_t ui = 0; ui < plan.units.size(); ++ui) {
    const ExecUnit& u = plan.units[ui];
    const Layer& main = g.layers[static_cast<std::size_t>(u.main)];
    const QuantParams in_params =
        site_params[static_cast<std::size_t>(ui == 0 ? 0
                                                     : plan.units[ui - 1]
                                                           .site)];
    const QuantParams out_params =
        site_params[static_cast<std::size_t>(u.site)];
    QOp op;
    op.in_params = in_params;
    op.out_params = out_params;

    const int qmax = (1 << g.activation_bits) - 1;
    std::uint8_t clamp_min = 0;
    auto clamp_max = static_cast<std::uint8_t>(qmax);
    if (u.act >= 0) {
      clamp_min = static_cast<std::uint8_t>(quantize(0.0, out_params));
      if (g.layers[static_cast<std::size_t>(u.act)].kind == LayerKind::relu6) {
        clamp_max = static_cast<std::uint8_t>(quantize(6.0, out_params));
      }
    }

    if (u.op == LayerKind::dense || u.op == LayerKind::conv2d) {
      op.opcode =
          u.op == LayerKind::dense ? QOpCode::dense : QOpCode::conv2d;
      op.stride = main.stride;
      op.padding = main.padding;
      const detail::EffectiveParams eff = detail::effective_params(g, u);
      double lo = 0.0, hi = 0.0;
      for (double v : eff.weights.v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const NudgedRange wr = choose_weight_params(lo, hi, g.weight_bits);
      op.weights = quantize_weight_tensor(eff.weights, wr.params);
      std::vector<double> bias = eff.bias;
      if (bias.empty()) bias.assign(static_cast<std::size_t>(main.units), 0.0);
      op.stage.bias = quantize_bias(bias, wr.params.scale, in_params.scale);
      const double m =
          wr.params.scale * in_params.scale / out_params.scale;
      try {
        op.stage.multiplier = normalize_multiplier(m);
      } catch (const std::invalid_argument&) {
        throw std::invalid_argument(
            "convert: multiplier out of (0, 1) at layer " +
            std::to_string(u.main));
      }
      op.stage.output_zero_point = out_params.zero_point;
      op.stage.clamp_min = clamp_min;
      op.stage.clamp_max = clamp_max;
    } else if (u.op == LayerKind::add_bypass) {
      op.opcode = QOpCode::add;
      op.bypass_from = u.bypass_unit;
      const QuantParams bypass_params =
          site_params[static_cast<std::size_t>(
              plan.units[static_cast<std::size_t>(u.bypass_unit)].site)];
      try {
        op.add_stage = derive_add_stage(in_params, bypass_params, out_params);
      } catch (const std::invalid_argument&) {
        throw std::invalid_argument(
            "convert: add rescaling multiplier out of range at layer " +
            std::to_string(u.main));
      }
      op.add_stage.clamp_min = clamp_min;
      op.add_stage.clamp_max = clamp_max;
    } else {
      op.opcode = QOpCode::concat;
      op.bypass_from = u.bypass_unit;
    }
    qg.ops.push_back(std::move(op));
  }
  return qg;
}

// Quantizes raw real-valued inputs with the graph's input parameters. This
// is the only place real values enter; the inference path itself is
// integer-only.
inline QuantizedTensor quantize_input(const QuantGraph& qg,
                                      const Tensor& input) {
  return quantize_tensor(input, qg.input_params);
}

namespace detail {

inline QuantizedTensor dense_infer(const QOp& op, const QuantizedTensor& in) {
  const int batch = in.dim(0);
  const auto features = static_cast<int>(in.numel() / batch);
  if (features != op.weights.dim(1)) {
    throw std::invalid_argument("dense op: input feature count mismatch");
  }
  QuantizedTensor rhs(Shape{features, batch}, in.params);
  for (int b = 0; b < batch; ++b) {
    for (int f = 0; f < features; ++f) {
      rhs.codes[static_cast<std::size_t>(f) * batch + b] =
          in.codes[static_cast<std::size_t>(b) * features + f];
    }
  }
  const QuantizedTensor res =
      gemm_quantized(op.weights, rhs, op.out_params, op.stage);
  const int out = op.weights.dim(0);
  QuantizedTensor y(Shape{batch, out}, op.out_params);
  for (int b = 0; b < batch; ++b) {
    for (int o = 0; o < out; ++o) {
      y.codes[static_cast<std::size_t>(b) * out + o] =
          res.codes[static_cast<std::size_t>(o) * batch + b];
    }
  }
  return y;
}

}  // namespace detail

// Executes the integer graph, returning every op's output. The entire path
// runs on codes and pre-lowered integer constants.
inline std::vector<QuantizedTensor> run_inference_trace(
    const QuantGraph& qg, const QuantizedTensor& input) {
  if (!(input.params == qg.input_params)) {
    throw std::invalid_argument(
        "run_inference: input parameters do not match the graph");
  }
  std::vector<QuantizedTensor> outs;
  outs.reserve(qg.ops.size());
  const QuantizedTensor* cur = &input;
  for (const QOp& op : qg.ops) {
    QuantizedTensor y;
    switch (op.opcode) {
      case QOpCode::dense:
        y = detail::dense_infer(op, *cur);
        break;
      case QOpCode::conv2d:
        y = conv2d_quantized(*cur, op.weights, op.out_params, op.stage,
                             op.stride, op.padding);
        break;
      case QOpCode::add:
        y = add_quantized_with_stage(
            *cur, outs[static_cast<std::size_t>(op.bypass_from)],
            op.out_params, op.add_stage);
        break;
      case QOpCode::concat: {
        // Scale equality across the group is established at convert time;
        // at run time only the integer-visible parts are re-checked so the
        // inference path never reads a float.
        const QuantizedTensor& other =
            outs[static_cast<std::size_t>(op.bypass_from)];
        if (other.params.zero_point != cur->params.zero_point ||
            other.params.bits != cur->params.bits) {
          throw std::invalid_argument(
              "concat op: inputs were not harmonized");
        }
        QuantizedTensor first = other;
        first.params = op.out_params;
        QuantizedTensor second = *cur;
        second.params = op.out_params;
        const int axis = static_cast<int>(cur->shape.size()) - 1;
        y = concat_quantized({&first, &second}, axis);
        break;
      }
    }
    outs.push_back(std::move(y));
    cur = &outs.back();
  }
  return outs;
}

inline QuantizedTensor run_inference(const QuantGraph& qg,
                                     const QuantizedTensor& input) {
  if (qg.ops.empty()) return input;
  return run_inference_trace(qg, input).back();
}

// Differential audit that no floating-point constant reaches the inference
// path: poisoning every stored scale must leave all output codes identical.
// Each scale gets a distinct garbage value so even ratios cannot cancel.
inline bool audit_integer_only(const QuantGraph& qg,
                               const QuantizedTensor& input) {
  const std::vector<QuantizedTensor> base = run_inference_trace(qg, input);
  QuantGraph poisoned = qg;
  double garbage = -777.25;
  poisoned.input_params.scale = garbage;
  for (QOp& op : poisoned.ops) {
    op.in_params.scale = (garbage -= 1.0);
    op.out_params.scale = (garbage -= 1.0);
    op.weights.params.scale = (garbage -= 1.0);
  }
  QuantizedTensor poisoned_input = input;
  poisoned_input.params.scale = poisoned.input_params.scale;
  const std::vector<QuantizedTensor> got =
      run_inference_trace(poisoned, poisoned_input);
  if (got.size() != base.size()) return false;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (got[i].codes != base[i].codes) return false;
  }
  return true;
}

// ---- correspondence verification ---------------------------------------

struct LayerDivergence {
  int op_index = 0;
  std::string op_name;
  int max_code_diff = 0;
};

struct CorrespondenceReport {
  std::vector<LayerDivergence> layers;
  double argmax_agreement = 1.0;
  std::size_t samples = 0;

  int max_divergence() const {
    int m = 0;
    for (const auto& l : layers) m = std::max(m, l.max_code_diff);
    return m;
  }

  std::string to_tsv() const {
    std::ostringstream out;
    out << "op\tkind\tmax_code_diff\n";
    for (const auto& l : layers) {
      out << l.op_index << "\t" << l.op_name << "\t" << l.max_code_diff
          << "\n";
    }
    out << "# samples\t" << samples << "\n";
    out << "# argmax_agreement\t" << argmax_agreement << "\n";
    return out.str();
  }
};

// Runs the simulated (fake-quant float) path and the integer path on the
// same raw inputs and reports the per-op maximum code divergence plus the
// end-to-end argmax agreement.
inline CorrespondenceReport verify_correspondence(const FloatGraph& g,
                                                  const QuantGraph& qg,
                                                  const Tensor& inputs) {
  const GraphPlan plan = analyze_graph(g);
  if (plan.units.size() != qg.ops.size()) {
    throw std::invalid_argument(
        "verify_correspondence: graph structures do not match");
  }
  SimConfig sim;
  sim.quantize_weights = true;
  sim.quantize_activations = true;
  sim.weight_bits = qg.weight_bits;
  sim.activation_bits = qg.activation_bits;
  sim.site_params.resize(static_cast<std::size_t>(plan.num_sites));
  sim.site_params[0] = qg.input_params;
  for (std::size_t ui = 0; ui < plan.units.size(); ++ui) {
    sim.site_params[static_cast<std::size_t>(plan.units[ui].site)] =
        qg.ops[ui].out_params;
  }

  CorrespondenceReport report;
  report.samples = static_cast<std::size_t>(inputs.dim(0));
  report.layers.resize(qg.ops.size());
  for (std::size_t ui = 0; ui < qg.ops.size(); ++ui) {
    report.layers[ui].op_index = static_cast<int>(ui);
    report.layers[ui].op_name = qop_name(qg.ops[ui].opcode);
  }

  const SimResult sim_res = sim_forward(g, plan, inputs, sim, true);
  const QuantizedTensor qinput = quantize_input(qg, inputs);
  const std::vector<QuantizedTensor> trace = run_inference_trace(qg, qinput);

  std::size_t agree = 0;
  for (std::size_t ui = 0; ui < qg.ops.size(); ++ui) {
    const Tensor& sim_values =
        sim_res.site_values[static_cast<std::size_t>(plan.units[ui].site)];
    const QuantizedTensor& got = trace[ui];
    int max_diff = 0;
    for (std::size_t i = 0; i < got.codes.size(); ++i) {
      const int want = quantize(sim_values.v[i], qg.ops[ui].out_params);
      max_diff = std::max(
          max_diff, std::abs(static_cast<int>(got.codes[i]) - want));
    }
    report.layers[ui].max_code_diff = max_diff;
  }

  const QuantizedTensor& qlogits = trace.back();
  const int classes = qlogits.dim(1);
  for (int b = 0; b < qlogits.dim(0); ++b) {
    int int_best = 0;
    const auto row =
        qlogits.codes.data() + static_cast<std::size_t>(b) * classes;
    for (int k = 1; k < classes; ++k) {
      if (row[k] > row[int_best]) int_best = k;
    }
    const int sim_best = argmax_row(
        sim_res.logits.v.data() + static_cast<std::size_t>(b) * classes,
        classes);
    if (int_best == sim_best) ++agree;
  }
  report.argmax_agreement =
      static_cast<double>(agree) / static_cast<double>(qlogits.dim(0));
  return report;
}

}  // namespace iqnn
