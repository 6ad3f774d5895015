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

#include "iqnn/dataset.hpp"
#include "iqnn/floatops.hpp"
#include "iqnn/graph.hpp"
#include "iqnn/rng.hpp"
#include "iqnn/simtrain.hpp"

// Desk-scale training with simulated quantization. Weights are stored in
// floating point and snapped onto their integer grid in the forward pass;
// activation grids come from EMA range observers and can be delayed. A
// batch-normalized layer is trained in folded form: the unfolded output
// only feeds the moment estimates, the folded weights feed the quantized
// path, and gradients treat the EMA statistics as constants.

namespace iqnn {

struct TrainConfig {
  int weight_bits = 8;
  int activation_bits = 8;
  // Steps before activation quantization turns on; -1 disables simulated
  // quantization entirely (plain float training).
  std::int64_t quant_delay_steps = 1000;
  double ema_decay = 0.999;
  double learning_rate = 0.05;
  double lr_decay_factor = 1.0;
  std::int64_t lr_decay_steps = 0;  // 0 keeps the rate constant
  double momentum = 0.9;
  int batch_size = 32;
  std::int64_t steps = 3000;
  std::int64_t eval_interval = 200;
  double eval_fraction = 0.2;
  std::uint64_t seed = 1;
};

class TrainError : public std::runtime_error {
 public:
  explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

struct TrainResult {
  FloatGraph graph;
  std::string log;
  double final_train_acc = 0.0;
  double final_eval_acc = 0.0;
};

// ---- simulated forward (evaluation form) -------------------------------

struct SimConfig {
  bool quantize_weights = false;
  bool quantize_activations = false;
  int weight_bits = 8;
  int activation_bits = 8;
  // One entry per site (site 0 is the input); required when activation
  // quantization is on. Filled from learned ranges or from a converted
  // graph when verifying correspondence.
  std::vector<QuantParams> site_params;
};

struct SimResult {
  Tensor logits;
  std::vector<Tensor> site_values;  // per site, after any fake quantization
};

namespace detail {

inline Tensor flatten_batch(const Tensor& x) {
  const int batch = x.dim(0);
  Tensor out = x;
  out.shape = Shape{batch, static_cast<int>(x.numel() / batch)};
  return out;
}

inline Tensor clamp_forward(const Tensor& x, double lo, double hi) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    y.v[i] = std::min(std::max(x.v[i], lo), hi);
  }
  return y;
}

inline void add_into(Tensor& dst, const Tensor& src) {
  if (dst.v.empty()) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

inline double act_upper_bound(LayerKind kind) {
  return kind == LayerKind::relu6 ? 6.0
                                  : std::numeric_limits<double>::infinity();
}

// Concatenation along the channel axis with the bypass branch first.
inline Tensor concat_channels(const Tensor& first, const Tensor& second) {
  const int c1 = first.shape.back();
  const int c2 = second.shape.back();
  Shape out_shape = first.shape;
  out_shape.back() = c1 + c2;
  Tensor out(out_shape);
  const std::int64_t outer = first.numel() / c1;
  for (std::int64_t i = 0; i < outer; ++i) {
    for (int c = 0; c < c1; ++c) {
      out.v[static_cast<std::size_t>(i * (c1 + c2) + c)] =
          first.v[static_cast<std::size_t>(i * c1 + c)];
    }
    for (int c = 0; c < c2; ++c) {
      out.v[static_cast<std::size_t>(i * (c1 + c2) + c1 + c)] =
          second.v[static_cast<std::size_t>(i * c2 + c)];
    }
  }
  return out;
}

// The effective weights and bias of a unit after batch-norm folding with
// the current EMA statistics.
struct EffectiveParams {
  Tensor weights;
  std::vector<double> bias;
  std::vector<double> fold_factor;  // gamma / sigma, empty without BN
  std::vector<double> sigma;
};

inline EffectiveParams effective_params(const FloatGraph& g,
                                        const ExecUnit& u) {
  const Layer& main = g.layers[static_cast<std::size_t>(u.main)];
  EffectiveParams eff;
  if (u.bn < 0) {
    eff.weights = main.weights;
    eff.bias = main.bias;
    return eff;
  }
  const BatchNormParams& bn = g.layers[static_cast<std::size_t>(u.bn)].bn;
  auto [w_fold, bias_fold] = fold_batch_norm(main.weights, bn);
  eff.weights = std::move(w_fold);
  eff.bias = std::move(bias_fold);
  const auto channels = bn.gamma.size();
  eff.fold_factor.resize(channels);
  eff.sigma.resize(channels);
  for (std::size_t o = 0; o < channels; ++o) {
    eff.sigma[o] = std::sqrt(bn.ema_var[o] + bn.epsilon);
    eff.fold_factor[o] = bn.gamma[o] / eff.sigma[o];
  }
  return eff;
}

}  // namespace detail

// Runs the float-side model as the inference engine will see it: batch
// norms folded with EMA statistics, optional weight/activation fake
// quantization. Used for evaluation, the float baseline, and verification.
inline SimResult sim_forward(const FloatGraph& g, const GraphPlan& plan,
                             const Tensor& input, const SimConfig& cfg,
                             bool capture_sites = false) {
  if (cfg.quantize_activations &&
      cfg.site_params.size() != static_cast<std::size_t>(plan.num_sites)) {
    throw std::invalid_argument("sim_forward: missing site parameters");
  }
  SimResult res;
  if (capture_sites) res.site_values.resize(plan.num_sites);
  Tensor cur = input;
  if (cfg.quantize_activations) {
    cur = fake_quant_with_params(cur, cfg.site_params[0]);
  }
  if (capture_sites) res.site_values[0] = cur;

  std::vector<Tensor> unit_outputs(plan.units.size());
  for (std::size_t ui = 0; ui < plan.units.size(); ++ui) {
    const ExecUnit& u = plan.units[ui];
    const Layer& main = g.layers[static_cast<std::size_t>(u.main)];
    Tensor y;
    if (u.op == LayerKind::dense || u.op == LayerKind::conv2d) {
      detail::EffectiveParams eff = detail::effective_params(g, u);
      if (cfg.quantize_weights) {
        eff.weights = fake_quant_weights(eff.weights, cfg.weight_bits).values;
      }
      if (u.op == LayerKind::dense) {
        y = dense_forward(detail::flatten_batch(cur), eff.weights, eff.bias);
      } else {
        y = conv2d_forward(cur, eff.weights, eff.bias, main.stride,
                           main.padding);
      }
    } else if (u.op == LayerKind::add_bypass) {
      const Tensor& other =
          unit_outputs[static_cast<std::size_t>(u.bypass_unit)];
      y = cur;
      for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += other.v[i];
    } else {  // concat_bypass
      const Tensor& other =
          unit_outputs[static_cast<std::size_t>(u.bypass_unit)];
      y = detail::concat_channels(other, cur);
    }
    if (u.act >= 0) {
      y = detail::clamp_forward(
          y, 0.0,
          detail::act_upper_bound(
              g.layers[static_cast<std::size_t>(u.act)].kind));
    }
    if (cfg.quantize_activations) {
      y = fake_quant_with_params(y, cfg.site_params[static_cast<std::size_t>(
                                        u.site)]);
    }
    if (capture_sites) res.site_values[static_cast<std::size_t>(u.site)] = y;
    unit_outputs[ui] = y;
    cur = std::move(y);
  }
  res.logits = std::move(cur);
  return res;
}

// Builds the per-site parameter list from the ranges learned in training.
inline std::vector<QuantParams> site_params_from_ranges(
    const FloatGraph& g, const GraphPlan& plan) {
  std::vector<QuantParams> params(
      static_cast<std::size_t>(plan.num_sites));
  if (!g.has_input_range) {
    throw std::invalid_argument("graph has no learned input range");
  }
  params[0] =
      choose_params(g.input_range_min, g.input_range_max, g.activation_bits)
          .params;
  for (const ExecUnit& u : plan.units) {
    const Layer& end = g.layers[static_cast<std::size_t>(u.end)];
    if (!end.has_range) {
      throw std::invalid_argument(
          "missing learned range on layer " + std::to_string(u.end));
    }
    params[static_cast<std::size_t>(u.site)] =
        choose_params(end.range_min, end.range_max, g.activation_bits).params;
  }
  return params;
}

// ---- trainer ------------------------------------------------------------

namespace detail {

struct UnitCache {
  Tensor input;          // unit input (dense: already flattened)
  Tensor quant_weights;  // weights used in the forward pass
  std::vector<double> fold_factor;
  std::vector<double> sigma;
  Tensor pre_act;        // linear output before the clamp
  Tensor pre_site;       // value entering the site fake-quant
  double site_a = 0.0, site_b = 0.0;
  int split_channels = 0;  // concat: channels of the bypass branch
};

struct ParamState {
  Tensor w_vel;
  std::vector<double> bias_vel;
  std::vector<double> gamma_vel;
  std::vector<double> beta_vel;
};

}  // namespace detail

class Trainer {
 public:
  Trainer(FloatGraph graph, const Dataset& data, const TrainConfig& cfg)
      : g_(std::move(graph)),
        plan_(analyze_graph(g_)),
        cfg_(cfg),
        data_(data),
        rng_(cfg.seed, 0x99) {
    if (!plan_.has_softmax) {
      throw std::invalid_argument("training requires a softmax head");
    }
    if (cfg_.batch_size < 1 || cfg_.steps < 1) {
      throw std::invalid_argument("bad training configuration");
    }
    if (cfg_.weight_bits < 4 || cfg_.weight_bits > 8 ||
        cfg_.activation_bits < 4 || cfg_.activation_bits > 8) {
      throw std::invalid_argument("training bit depths must be in [4, 8]");
    }
    if (g_.layers.front().weights.v.empty() &&
        g_.layers.front().kind != LayerKind::softmax) {
      init_parameters(g_, cfg_.seed);
    }
    g_.weight_bits = cfg_.weight_bits;
    g_.activation_bits = cfg_.activation_bits;
    observers_.assign(static_cast<std::size_t>(plan_.num_sites), {});
    for (auto& o : observers_) o.decay = cfg_.ema_decay;
    states_.resize(plan_.units.size());
    for (std::size_t ui = 0; ui < plan_.units.size(); ++ui) {
      const ExecUnit& u = plan_.units[ui];
      Layer& main = g_.layers[static_cast<std::size_t>(u.main)];
      if (u.op == LayerKind::dense || u.op == LayerKind::conv2d) {
        states_[ui].w_vel = Tensor(main.weights.shape);
        states_[ui].bias_vel.assign(main.bias.size(), 0.0);
      }
      if (u.bn >= 0) {
        const auto ch =
            g_.layers[static_cast<std::size_t>(u.bn)].bn.gamma.size();
        states_[ui].gamma_vel.assign(ch, 0.0);
        states_[ui].beta_vel.assign(ch, 0.0);
      }
    }
    split_data();
  }

  TrainResult run() {
    std::ostringstream log;
    if (cfg_.quant_delay_steps < 0) {
      log << "# simulated quantization disabled (float run)\n";
    } else if (cfg_.quant_delay_steps > 0) {
      log << "# activation quantization disabled until step "
          << cfg_.quant_delay_steps << "\n";
    }
    double loss_sum = 0.0, acc_sum = 0.0;
    std::int64_t interval_count = 0;
    double last_eval_acc = 0.0, last_train_acc = 0.0;
    for (std::int64_t step = 0; step < cfg_.steps; ++step) {
      if (step == cfg_.quant_delay_steps && cfg_.quant_delay_steps > 0) {
        log << "# step " << step << ": activation quantization enabled\n";
      }
      const auto [loss, acc] = train_step(step);
      if (!std::isfinite(loss)) {
        throw TrainError("non-finite loss at step " + std::to_string(step));
      }
      loss_sum += loss;
      acc_sum += acc;
      ++interval_count;
      if ((step + 1) % cfg_.eval_interval == 0 || step + 1 == cfg_.steps) {
        last_train_acc = acc_sum / interval_count;
        last_eval_acc = evaluate(step);
        log << (step + 1) << "\t" << (loss_sum / interval_count) << "\t"
            << last_train_acc << "\t" << last_eval_acc << "\n";
        loss_sum = acc_sum = 0.0;
        interval_count = 0;
      }
    }
    store_ranges();
    TrainResult result;
    result.graph = g_;
    result.log = log.str();
    result.final_train_acc = last_train_acc;
    result.final_eval_acc = last_eval_acc;
    return result;
  }

  const GraphPlan& plan() const { return plan_; }

 private:
  bool weight_quant_on() const { return cfg_.quant_delay_steps >= 0; }
  bool act_quant_on(std::int64_t step) const {
    return cfg_.quant_delay_steps >= 0 && step >= cfg_.quant_delay_steps;
  }

  void split_data() {
    std::vector<std::uint32_t> order(data_.count());
    for (std::size_t i = 0; i < order.size(); ++i) {
      order[i] = static_cast<std::uint32_t>(i);
    }
    Rng split_rng(cfg_.seed, 0x51);
    split_rng.shuffle(order);
    std::size_t eval_count = static_cast<std::size_t>(
        static_cast<double>(order.size()) * cfg_.eval_fraction);
    if (eval_count >= order.size()) eval_count = order.size() - 1;
    train_idx_.assign(order.begin(),
                      order.end() - static_cast<std::ptrdiff_t>(eval_count));
    eval_idx_.assign(order.end() - static_cast<std::ptrdiff_t>(eval_count),
                     order.end());
    if (eval_idx_.empty()) eval_idx_ = train_idx_;
    if (train_idx_.empty()) {
      throw std::invalid_argument("dataset too small to train on");
    }
  }

  Tensor gather_batch(const std::vector<std::uint32_t>& idx,
                      std::size_t offset, std::size_t count,
                      std::vector<std::uint16_t>* labels) const {
    const Shape s = {static_cast<int>(count), data_.h, data_.w, data_.c};
    Tensor batch(s);
    const std::size_t dim = data_.feature_dim();
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t sample = idx[offset + i];
      const double* src = data_.sample(sample);
      std::copy(src, src + dim, batch.v.begin() + i * dim);
      if (labels != nullptr) labels->push_back(data_.labels[sample]);
    }
    return batch;
  }

  double lr_at(std::int64_t step) const {
    if (cfg_.lr_decay_steps <= 0 || cfg_.lr_decay_factor == 1.0) {
      return cfg_.learning_rate;
    }
    const auto k = step / cfg_.lr_decay_steps;
    return cfg_.learning_rate * std::pow(cfg_.lr_decay_factor,
                                         static_cast<double>(k));
  }

  std::pair<double, double> train_step(std::int64_t step) {
    // Deterministic epoch reshuffle.
    if (cursor_ + static_cast<std::size_t>(cfg_.batch_size) >
        train_idx_.size()) {
      rng_.shuffle(train_idx_);
      cursor_ = 0;
    }
    std::vector<std::uint16_t> labels;
    Tensor batch = gather_batch(train_idx_, cursor_,
                                static_cast<std::size_t>(cfg_.batch_size),
                                &labels);
    cursor_ += static_cast<std::size_t>(cfg_.batch_size);

    const bool qa = act_quant_on(step);
    const bool qw = weight_quant_on();

    // ---- forward with caches ----
    caches_.assign(plan_.units.size(), {});
    Tensor cur = batch;
    observers_[0].update(cur);
    if (qa) {
      const NudgedRange nr = choose_params(
          observers_[0].ema_min, observers_[0].ema_max, cfg_.activation_bits);
      cur = fake_quant_with_params(cur, nr.params);
    }
    std::vector<Tensor> unit_outputs(plan_.units.size());
    for (std::size_t ui = 0; ui < plan_.units.size(); ++ui) {
      const ExecUnit& u = plan_.units[ui];
      Layer& main = g_.layers[static_cast<std::size_t>(u.main)];
      detail::UnitCache& cache = caches_[ui];
      Tensor y;
      if (u.op == LayerKind::dense || u.op == LayerKind::conv2d) {
        const Tensor x_in = u.op == LayerKind::dense
                                ? detail::flatten_batch(cur)
                                : cur;
        cache.input = x_in;
        if (u.bn >= 0) {
          update_bn_moments(u, x_in, main);
        }
        detail::EffectiveParams eff = detail::effective_params(g_, u);
        cache.fold_factor = eff.fold_factor;
        cache.sigma = eff.sigma;
        Tensor wq = qw ? fake_quant_weights(eff.weights, cfg_.weight_bits)
                             .values
                       : eff.weights;
        cache.quant_weights = wq;
        y = u.op == LayerKind::dense
                ? dense_forward(x_in, wq, eff.bias)
                : conv2d_forward(x_in, wq, eff.bias, main.stride,
                                 main.padding);
      } else if (u.op == LayerKind::add_bypass) {
        y = cur;
        const Tensor& other =
            unit_outputs[static_cast<std::size_t>(u.bypass_unit)];
        for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += other.v[i];
      } else {
        const Tensor& other =
            unit_outputs[static_cast<std::size_t>(u.bypass_unit)];
        cache.split_channels = other.shape.back();
        y = detail::concat_channels(other, cur);
      }
      if (u.act >= 0) {
        cache.pre_act = y;
        y = detail::clamp_forward(
            y, 0.0,
            detail::act_upper_bound(
                g_.layers[static_cast<std::size_t>(u.act)].kind));
      }
      observers_[static_cast<std::size_t>(u.site)].update(y);
      if (qa) {
        const RangeObserver& obs =
            observers_[static_cast<std::size_t>(u.site)];
        const NudgedRange nr =
            choose_params(obs.ema_min, obs.ema_max, cfg_.activation_bits);
        cache.pre_site = y;
        cache.site_a = nr.a;
        cache.site_b = nr.b;
        y = fake_quant_with_params(y, nr.params);
      }
      unit_outputs[ui] = y;
      cur = unit_outputs[ui];
    }

    Tensor dlogits;
    const double loss =
        softmax_cross_entropy(cur, labels, 0, &dlogits);
    int correct = 0;
    for (int b = 0; b < cur.dim(0); ++b) {
      if (argmax_row(cur.v.data() + static_cast<std::size_t>(b) * cur.dim(1),
                     cur.dim(1)) == labels[static_cast<std::size_t>(b)]) {
        ++correct;
      }
    }

    // ---- backward ----
    std::vector<Tensor> grad_out(plan_.units.size());
    grad_out.back() = dlogits;
    const double lr = lr_at(step);
    for (std::size_t ri = plan_.units.size(); ri-- > 0;) {
      const ExecUnit& u = plan_.units[ri];
      Layer& main = g_.layers[static_cast<std::size_t>(u.main)];
      detail::UnitCache& cache = caches_[ri];
      Tensor g = std::move(grad_out[ri]);
      if (g.v.empty()) continue;  // dead branch
      if (qa) {
        g = fake_quant_backward(g, cache.pre_site, cache.site_a,
                                cache.site_b);
      }
      if (u.act >= 0) {
        const double hi = detail::act_upper_bound(
            g_.layers[static_cast<std::size_t>(u.act)].kind);
        for (std::size_t i = 0; i < g.v.size(); ++i) {
          const double v = cache.pre_act.v[i];
          if (v <= 0.0 || v >= hi) g.v[i] = 0.0;
        }
      }
      if (u.op == LayerKind::dense || u.op == LayerKind::conv2d) {
        Tensor dx;
        Tensor dwq;
        std::vector<double> dbias;
        if (u.op == LayerKind::dense) {
          DenseGrads grads = dense_backward(cache.input, cache.quant_weights,
                                            g);
          dx = std::move(grads.dx);
          dwq = std::move(grads.dw);
          dbias = std::move(grads.dbias);
        } else {
          ConvGrads grads = conv2d_backward(cache.input, cache.quant_weights,
                                            g, main.stride, main.padding);
          dx = std::move(grads.dx);
          dwq = std::move(grads.dw);
          dbias = std::move(grads.dbias);
        }
        apply_updates(static_cast<std::size_t>(ri), u, main, dwq, dbias, lr);
        if (ri > 0) {
          if (u.op == LayerKind::dense) {
            dx.shape = plan_.units[ri - 1].out_shape;
            dx.shape.insert(dx.shape.begin(), cfg_.batch_size);
          }
          detail::add_into(grad_out[ri - 1], dx);
        }
      } else if (u.op == LayerKind::add_bypass) {
        detail::add_into(grad_out[static_cast<std::size_t>(u.bypass_unit)],
                         g);
        if (ri > 0) detail::add_into(grad_out[ri - 1], g);
      } else {  // concat_bypass
        const int c1 = cache.split_channels;
        const int c_total = u.out_shape.back();
        const int c2 = c_total - c1;
        Shape first_shape = u.out_shape;
        first_shape.back() = c1;
        first_shape.insert(first_shape.begin(), cfg_.batch_size);
        Shape second_shape = u.out_shape;
        second_shape.back() = c2;
        second_shape.insert(second_shape.begin(), cfg_.batch_size);
        Tensor g_first(first_shape), g_second(second_shape);
        const std::int64_t outer = g.numel() / c_total;
        for (std::int64_t i = 0; i < outer; ++i) {
          for (int c = 0; c < c1; ++c) {
            g_first.v[static_cast<std::size_t>(i * c1 + c)] =
                g.v[static_cast<std::size_t>(i * c_total + c)];
          }
          for (int c = 0; c < c2; ++c) {
            g_second.v[static_cast<std::size_t>(i * c2 + c)] =
                g.v[static_cast<std::size_t>(i * c_total + c1 + c)];
          }
        }
        detail::add_into(grad_out[static_cast<std::size_t>(u.bypass_unit)],
                         g_first);
        if (ri > 0) detail::add_into(grad_out[ri - 1], g_second);
      }
    }
    return {loss, static_cast<double>(correct) / cur.dim(0)};
  }

  void update_bn_moments(const ExecUnit& u, const Tensor& x_in, Layer& main) {
    BatchNormParams& bn = g_.layers[static_cast<std::size_t>(u.bn)].bn;
    // Unfolded output, used only for the moment estimates.
    const Tensor raw =
        u.op == LayerKind::dense
            ? dense_forward(x_in, main.weights, {})
            : conv2d_forward(x_in, main.weights, {}, main.stride,
                             main.padding);
    const int channels = raw.shape.back();
    const std::int64_t rows = raw.numel() / channels;
    for (int c = 0; c < channels; ++c) {
      double mean = 0.0;
      for (std::int64_t r = 0; r < rows; ++r) {
        mean += raw.v[static_cast<std::size_t>(r * channels + c)];
      }
      mean /= static_cast<double>(rows);
      double var = 0.0;
      for (std::int64_t r = 0; r < rows; ++r) {
        const double d =
            raw.v[static_cast<std::size_t>(r * channels + c)] - mean;
        var += d * d;
      }
      var /= static_cast<double>(rows);
      const auto cc = static_cast<std::size_t>(c);
      if (!bn.initialized) {
        bn.ema_mean[cc] = mean;
        bn.ema_var[cc] = var;
      } else {
        bn.ema_mean[cc] =
            cfg_.ema_decay * bn.ema_mean[cc] + (1.0 - cfg_.ema_decay) * mean;
        bn.ema_var[cc] =
            cfg_.ema_decay * bn.ema_var[cc] + (1.0 - cfg_.ema_decay) * var;
      }
    }
    bn.initialized = true;
  }

  void apply_updates(std::size_t ui, const ExecUnit& u, Layer& main,
                     const Tensor& dwq, const std::vector<double>& dbias,
                     double lr) {
    detail::ParamState& st = states_[ui];
    if (u.bn < 0) {
      sgd(main.weights.v, st.w_vel.v, dwq.v, lr);
      if (!main.bias.empty()) sgd(main.bias, st.bias_vel, dbias, lr);
      return;
    }
    // Folded unit: dwq is the gradient at the folded, quantized weights.
    BatchNormParams& bn = g_.layers[static_cast<std::size_t>(u.bn)].bn;
    const detail::UnitCache& cache = caches_[ui];
    const auto channels = bn.gamma.size();
    const std::size_t per_channel = main.weights.v.size() / channels;
    std::vector<double> dgamma(channels, 0.0);
    Tensor dw(main.weights.shape);
    for (std::size_t o = 0; o < channels; ++o) {
      const double factor = cache.fold_factor[o];
      double dot = 0.0;
      for (std::size_t j = 0; j < per_channel; ++j) {
        const std::size_t k = o * per_channel + j;
        dw.v[k] = dwq.v[k] * factor;
        dot += dwq.v[k] * main.weights.v[k];
      }
      dgamma[o] = dot / cache.sigma[o] -
                  dbias[o] * bn.ema_mean[o] / cache.sigma[o];
    }
    sgd(main.weights.v, st.w_vel.v, dw.v, lr);
    sgd(bn.gamma, st.gamma_vel, dgamma, lr);
    sgd(bn.beta, st.beta_vel, dbias, lr);
  }

  void sgd(std::vector<double>& param, std::vector<double>& vel,
           const std::vector<double>& grad, double lr) const {
    for (std::size_t i = 0; i < param.size(); ++i) {
      vel[i] = cfg_.momentum * vel[i] - lr * grad[i];
      param[i] += vel[i];
    }
  }

  double evaluate(std::int64_t step) {
    SimConfig sim;
    sim.quantize_weights = weight_quant_on();
    sim.quantize_activations = act_quant_on(step);
    sim.weight_bits = cfg_.weight_bits;
    sim.activation_bits = cfg_.activation_bits;
    if (sim.quantize_activations) {
      sim.site_params.resize(static_cast<std::size_t>(plan_.num_sites));
      for (int s = 0; s < plan_.num_sites; ++s) {
        const RangeObserver& obs = observers_[static_cast<std::size_t>(s)];
        sim.site_params[static_cast<std::size_t>(s)] =
            choose_params(obs.ema_min, obs.ema_max, cfg_.activation_bits)
                .params;
      }
    }
    std::size_t correct = 0;
    const std::size_t chunk = 256;
    for (std::size_t off = 0; off < eval_idx_.size(); off += chunk) {
      const std::size_t count = std::min(chunk, eval_idx_.size() - off);
      std::vector<std::uint16_t> labels;
      const Tensor batch = gather_batch(eval_idx_, off, count, &labels);
      const SimResult res = sim_forward(g_, plan_, batch, sim);
      for (std::size_t b = 0; b < count; ++b) {
        const int k = res.logits.dim(1);
        if (argmax_row(res.logits.v.data() + b * static_cast<std::size_t>(k),
                       k) == labels[b]) {
          ++correct;
        }
      }
    }
    return static_cast<double>(correct) / eval_idx_.size();
  }

  void store_ranges() {
    g_.has_input_range = true;
    g_.input_range_min = observers_[0].ema_min;
    g_.input_range_max = observers_[0].ema_max;
    for (const ExecUnit& u : plan_.units) {
      Layer& end = g_.layers[static_cast<std::size_t>(u.end)];
      const RangeObserver& obs = observers_[static_cast<std::size_t>(u.site)];
      end.has_range = true;
      end.range_min = obs.ema_min;
      end.range_max = obs.ema_max;
    }
  }

  FloatGraph g_;
  GraphPlan plan_;
  TrainConfig cfg_;
  const Dataset& data_;
  Rng rng_;
  std::vector<std::uint32_t> train_idx_;
  std::vector<std::uint32_t> eval_idx_;
  std::size_t cursor_ = 0;
  std::vector<RangeObserver> observers_;
  std::vector<detail::UnitCache> caches_;
  std::vector<detail::ParamState> states_;
};

inline TrainResult train(FloatGraph model, const Dataset& data,
                         const TrainConfig& cfg) {
  Trainer trainer(std::move(model), data, cfg);
  return trainer.run();
}

}  // namespace iqnn
