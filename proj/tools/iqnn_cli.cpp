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

// Command-line driver: train, quantize, infer, verify, bench, selftest.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 verification
// failure.

#include <sys/stat.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iqnn/convert.hpp"
#include "iqnn/dataset.hpp"
#include "iqnn/fixedpoint.hpp"
#include "iqnn/serialize.hpp"
#include "iqnn/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

using ordered_json = nlohmann::ordered_json;

void write_manifest(const std::string& beside_path,
                    const std::string& command,
                    const ordered_json& flags,
                    const std::vector<std::string>& outputs) {
  ordered_json m;
  m["command"] = command;
  m["flags"] = flags;
  m["format_versions"] = {{"iqds", 1},
                          {"iqf1", iqnn::kModelFormatVersion},
                          {"iqm1", iqnn::kModelFormatVersion}};
  m["outputs"] = outputs;
  std::ofstream out(beside_path + ".manifest.json",
                    std::ios::binary | std::ios::trunc);
  out << m.dump(2) << "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw iqnn::DataError("cannot open for writing: " + path);
  out << content;
}

void require_writable_location(const std::string& path) {
  const auto slash = path.find_last_of('/');
  if (slash == std::string::npos) return;  // current directory
  const std::string dir = path.substr(0, slash);
  std::ifstream probe(dir);
  struct stat st{};
  if (stat(dir.c_str(), &st) != 0 || !S_ISDIR(st.st_mode)) {
    throw iqnn::DataError("output directory does not exist: " + dir);
  }
}

iqnn::FloatGraph build_model(const std::string& name, const iqnn::Dataset& d,
                             int hidden, int channels) {
  const int features = static_cast<int>(d.feature_dim());
  if (name == "mlp") {
    return iqnn::make_mlp(features, hidden, d.num_classes);
  }
  if (name == "mlp2") {
    return iqnn::make_mlp2(features, hidden, d.num_classes, false);
  }
  if (name == "mlp2-bn") {
    return iqnn::make_mlp2(features, hidden, d.num_classes, true);
  }
  if (name == "convnet") {
    return iqnn::make_convnet(d.h, d.w, d.c, channels, d.num_classes);
  }
  if (name == "resmini") {
    return iqnn::make_resmini(d.h, d.w, d.c, channels, d.num_classes);
  }
  if (name == "catnet") {
    return iqnn::make_catnet(d.h, d.w, d.c, channels, d.num_classes);
  }
  throw CLI::ValidationError("--model", "unknown model preset: " + name);
}

iqnn::Tensor dataset_features(const iqnn::Dataset& d, std::size_t offset,
                              std::size_t count) {
  const iqnn::Shape s = {static_cast<int>(count), d.h, d.w, d.c};
  iqnn::Tensor batch(s);
  for (std::size_t i = 0; i < count; ++i) {
    const double* src = d.sample(offset + i);
    std::copy(src, src + d.feature_dim(),
              batch.v.begin() + i * d.feature_dim());
  }
  return batch;
}

// ---- train --------------------------------------------------------------

struct TrainFlags {
  std::string dataset;
  std::string out;
  std::string model = "mlp";
  int hidden = 16;
  int channels = 8;
  iqnn::TrainConfig cfg;
};

int cmd_train(const TrainFlags& f) {
  require_writable_location(f.out);
  const iqnn::Dataset data = iqnn::load_dataset(f.dataset);
  iqnn::FloatGraph model = build_model(f.model, data, f.hidden, f.channels);
  const iqnn::TrainResult result = iqnn::train(std::move(model), data, f.cfg);

  iqnn::save_float_graph(result.graph, f.out);

  std::ostringstream ranges;
  ranges << "site\tlayer\tmin\tmax\n";
  ranges << "input\t-\t" << result.graph.input_range_min << "\t"
         << result.graph.input_range_max << "\n";
  for (std::size_t i = 0; i < result.graph.layers.size(); ++i) {
    const iqnn::Layer& l = result.graph.layers[i];
    if (!l.has_range) continue;
    ranges << "act\t" << i << "\t" << l.range_min << "\t" << l.range_max
           << "\n";
  }
  write_text_file(f.out + ".ranges.tsv", ranges.str());

  std::ostringstream log;
  log << "# seed " << f.cfg.seed << "\n";
  log << "# step\tloss\ttrain_acc\teval_acc\n";
  log << result.log;
  write_text_file(f.out + ".log", log.str());

  ordered_json flags;
  flags["dataset"] = f.dataset;
  flags["model"] = f.model;
  flags["hidden"] = f.hidden;
  flags["channels"] = f.channels;
  flags["bits_weights"] = f.cfg.weight_bits;
  flags["bits_activations"] = f.cfg.activation_bits;
  flags["quant_delay"] = f.cfg.quant_delay_steps;
  flags["ema_decay"] = f.cfg.ema_decay;
  flags["lr"] = f.cfg.learning_rate;
  flags["lr_decay_factor"] = f.cfg.lr_decay_factor;
  flags["lr_decay_steps"] = f.cfg.lr_decay_steps;
  flags["momentum"] = f.cfg.momentum;
  flags["batch_size"] = f.cfg.batch_size;
  flags["steps"] = f.cfg.steps;
  flags["eval_interval"] = f.cfg.eval_interval;
  flags["eval_fraction"] = f.cfg.eval_fraction;
  flags["seed"] = f.cfg.seed;
  write_manifest(f.out, "train", flags,
                 {f.out, f.out + ".ranges.tsv", f.out + ".log"});

  std::cout << "trained " << f.model << " for " << f.cfg.steps
            << " steps: train_acc=" << result.final_train_acc
            << " eval_acc=" << result.final_eval_acc << "\n"
            << "wrote " << f.out << "\n";
  return kExitOk;
}

// ---- quantize -----------------------------------------------------------

int cmd_quantize(const std::string& model_path, const std::string& out) {
  require_writable_location(out);
  const iqnn::FloatGraph g = iqnn::load_float_graph(model_path);
  const iqnn::QuantGraph qg = iqnn::convert(g);
  iqnn::save_model_file(qg, out);

  std::cout << "op\tkind\tS_in\tZ_in\tS_w\tZ_w\tS_out\tZ_out\tM\tM0\tn\t"
               "clamp\n";
  for (std::size_t i = 0; i < qg.ops.size(); ++i) {
    const iqnn::QOp& op = qg.ops[i];
    std::cout << i << "\t" << iqnn::qop_name(op.opcode) << "\t"
              << op.in_params.scale << "\t" << op.in_params.zero_point
              << "\t";
    if (op.opcode == iqnn::QOpCode::dense ||
        op.opcode == iqnn::QOpCode::conv2d) {
      std::cout << op.weights.params.scale << "\t"
                << op.weights.params.zero_point << "\t"
                << op.out_params.scale << "\t" << op.out_params.zero_point
                << "\t" << op.stage.multiplier.reconstruct() << "\t"
                << op.stage.multiplier.m0_raw << "\t"
                << op.stage.multiplier.shift << "\t["
                << static_cast<int>(op.stage.clamp_min) << ","
                << static_cast<int>(op.stage.clamp_max) << "]\n";
    } else {
      std::cout << "-\t-\t" << op.out_params.scale << "\t"
                << op.out_params.zero_point << "\t-\t-\t-\t-\n";
    }
  }
  for (const std::string& note : qg.notes) {
    std::cout << "# " << note << "\n";
  }

  ordered_json flags;
  flags["model"] = model_path;
  write_manifest(out, "quantize", flags, {out});
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

// ---- infer --------------------------------------------------------------

std::vector<int> batched_predictions(const iqnn::QuantGraph& qg,
                                     const iqnn::Dataset& data,
                                     int threads) {
  std::vector<int> preds(data.count(), -1);
  const auto run_range = [&](std::size_t lo, std::size_t hi) {
    constexpr std::size_t kChunk = 64;
    for (std::size_t off = lo; off < hi; off += kChunk) {
      const std::size_t count = std::min(kChunk, hi - off);
      const iqnn::Tensor batch = dataset_features(data, off, count);
      const iqnn::QuantizedTensor out =
          iqnn::run_inference(qg, iqnn::quantize_input(qg, batch));
      const int classes = out.dim(1);
      for (std::size_t b = 0; b < count; ++b) {
        int best = 0;
        const auto* row = out.codes.data() + b * classes;
        for (int k = 1; k < classes; ++k) {
          if (row[k] > row[best]) best = k;
        }
        preds[off + b] = best;
      }
    }
  };
  if (threads <= 1) {
    run_range(0, data.count());
  } else {
    std::vector<std::thread> pool;
    const std::size_t per =
        (data.count() + static_cast<std::size_t>(threads) - 1) /
        static_cast<std::size_t>(threads);
    for (int t = 0; t < threads; ++t) {
      const std::size_t lo = static_cast<std::size_t>(t) * per;
      const std::size_t hi = std::min(data.count(), lo + per);
      if (lo >= hi) break;
      pool.emplace_back(run_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return preds;
}

int cmd_infer(const std::string& model_path, const std::string& dataset,
              const std::string& out, int threads, std::uint64_t seed) {
  const iqnn::QuantGraph qg = iqnn::load_model_file(model_path);
  const iqnn::Dataset data = iqnn::load_dataset(dataset);
  const std::vector<int> preds = batched_predictions(qg, data, threads);

  std::size_t correct = 0;
  std::ostringstream text;
  text << "# seed " << seed << "\n";
  text << "sample\tprediction\tlabel\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    text << i << "\t" << preds[i] << "\t" << data.labels[i] << "\n";
    if (preds[i] == data.labels[i]) ++correct;
  }
  const double accuracy =
      static_cast<double>(correct) / static_cast<double>(preds.size());
  text << "# accuracy\t" << accuracy << "\n";

  if (out.empty()) {
    std::cout << text.str();
  } else {
    write_text_file(out, text.str());
    ordered_json flags;
    flags["model"] = model_path;
    flags["dataset"] = dataset;
    flags["threads"] = threads;
    flags["seed"] = seed;
    write_manifest(out, "infer", flags, {out});
    std::cout << "accuracy " << accuracy << " over " << preds.size()
              << " samples\nwrote " << out << "\n";
  }
  return kExitOk;
}

// ---- verify -------------------------------------------------------------

int cmd_verify(const std::string& float_path, const std::string& model_path,
               const std::string& dataset, const std::string& out,
               std::size_t max_samples, int max_code_diff,
               double min_agreement) {
  const iqnn::FloatGraph g = iqnn::load_float_graph(float_path);
  const iqnn::QuantGraph qg = iqnn::load_model_file(model_path);
  const iqnn::Dataset data = iqnn::load_dataset(dataset);
  const std::size_t count = std::min(max_samples, data.count());
  const iqnn::Tensor inputs = dataset_features(data, 0, count);
  const iqnn::CorrespondenceReport report =
      iqnn::verify_correspondence(g, qg, inputs);

  const std::string tsv = report.to_tsv();
  if (out.empty()) {
    std::cout << tsv;
  } else {
    write_text_file(out, tsv);
    ordered_json flags;
    flags["float_model"] = float_path;
    flags["model"] = model_path;
    flags["dataset"] = dataset;
    flags["samples"] = count;
    write_manifest(out, "verify", flags, {out});
    std::cout << tsv;
    std::cout << "wrote " << out << "\n";
  }
  if (report.max_divergence() > max_code_diff ||
      report.argmax_agreement < min_agreement) {
    std::cerr << "verification failed: max divergence "
              << report.max_divergence() << " (limit " << max_code_diff
              << "), agreement " << report.argmax_agreement << " (floor "
              << min_agreement << ")\n";
    return kExitVerification;
  }
  return kExitOk;
}

// ---- bench --------------------------------------------------------------

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

void float_matmul(const std::vector<float>& a, const std::vector<float>& b,
                  std::vector<float>& c, int n, int row_lo, int row_hi) {
  for (int i = row_lo; i < row_hi; ++i) {
    for (int k = 0; k < n; ++k) {
      float acc = 0.0f;
      for (int j = 0; j < n; ++j) {
        acc += a[static_cast<std::size_t>(i) * n + j] *
               b[static_cast<std::size_t>(j) * n + k];
      }
      c[static_cast<std::size_t>(i) * n + k] = acc;
    }
  }
}

int cmd_bench(const std::vector<int>& sizes, int reps, int threads,
              const std::string& out, std::uint64_t seed) {
  std::ostringstream text;
  text << "# seed " << seed << ", reps " << reps << ", threads " << threads
       << "\n";
  text << "size\tkernel\tmedian_ns\tgops\n";
  iqnn::Rng rng(seed, 0xbe);
  for (int n : sizes) {
    if (n < 1 || n > 4096) {
      throw CLI::ValidationError("--sizes", "size out of range: " +
                                                std::to_string(n));
    }
    const double ops = 2.0 * n * static_cast<double>(n) * n;

    iqnn::QuantParams pw;
    pw.scale = 0.007, pw.zero_point = 128;
    iqnn::QuantParams px;
    px.scale = 0.035, px.zero_point = 120;
    iqnn::QuantParams po;
    po.scale = 0.09, po.zero_point = 7;
    iqnn::QuantizedTensor lhs(iqnn::Shape{n, n}, pw);
    iqnn::QuantizedTensor rhs(iqnn::Shape{n, n}, px);
    for (auto& c : lhs.codes) {
      c = static_cast<std::uint8_t>(rng.range(1, 255));
    }
    for (auto& c : rhs.codes) {
      c = static_cast<std::uint8_t>(rng.range(0, 255));
    }
    iqnn::FusedOutputStage stage;
    stage.bias.assign(static_cast<std::size_t>(n), 1000);
    stage.multiplier = iqnn::normalize_multiplier(
        pw.scale * px.scale / po.scale);
    stage.output_zero_point = po.zero_point;

    const auto time_one = [&](auto&& fn) {
      std::vector<double> ns;
      for (int r = 0; r < reps + 3; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        if (r >= 3) {  // discard warmup
          ns.push_back(
              std::chrono::duration<double, std::nano>(t1 - t0).count());
        }
      }
      return median(ns);
    };

    const double int_ns = time_one([&] {
      if (threads <= 1) {
        volatile auto sink =
            iqnn::gemm_quantized(lhs, rhs, po, stage).codes[0];
        (void)sink;
      } else {
        // Row-partitioned across threads.
        std::vector<std::thread> pool;
        const int per = (n + threads - 1) / threads;
        std::vector<std::uint8_t> outbuf(static_cast<std::size_t>(n) * n);
        for (int t = 0; t < threads; ++t) {
          const int lo = t * per, hi = std::min(n, lo + per);
          if (lo >= hi) break;
          pool.emplace_back([&, lo, hi] {
            iqnn::QuantizedTensor part = lhs;
            part.shape = iqnn::Shape{hi - lo, n};
            part.codes.assign(
                lhs.codes.begin() + static_cast<std::ptrdiff_t>(lo) * n,
                lhs.codes.begin() + static_cast<std::ptrdiff_t>(hi) * n);
            iqnn::FusedOutputStage pstage = stage;
            pstage.bias.assign(stage.bias.begin() + lo,
                               stage.bias.begin() + hi);
            const auto res = iqnn::gemm_quantized(part, rhs, po, pstage);
            std::copy(res.codes.begin(), res.codes.end(),
                      outbuf.begin() + static_cast<std::ptrdiff_t>(lo) * n);
          });
        }
        for (auto& th : pool) th.join();
      }
    });
    text << n << "\tint8\t" << static_cast<std::int64_t>(int_ns) << "\t"
         << ops / int_ns << "\n";

    std::vector<float> fa(static_cast<std::size_t>(n) * n);
    std::vector<float> fb(fa.size()), fc(fa.size());
    for (auto& v : fa) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (auto& v : fb) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const double float_ns = time_one([&] {
      if (threads <= 1) {
        float_matmul(fa, fb, fc, n, 0, n);
      } else {
        std::vector<std::thread> pool;
        const int per = (n + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
          const int lo = t * per, hi = std::min(n, lo + per);
          if (lo >= hi) break;
          pool.emplace_back(float_matmul, std::cref(fa), std::cref(fb),
                            std::ref(fc), n, lo, hi);
        }
        for (auto& th : pool) th.join();
      }
    });
    text << n << "\tfloat\t" << static_cast<std::int64_t>(float_ns) << "\t"
         << ops / float_ns << "\n";
  }
  if (out.empty()) {
    std::cout << text.str();
  } else {
    write_text_file(out, text.str());
    ordered_json flags;
    flags["reps"] = reps;
    flags["threads"] = threads;
    flags["seed"] = seed;
    write_manifest(out, "bench", flags, {out});
    std::cout << text.str();
    std::cout << "wrote " << out << "\n";
  }
  return kExitOk;
}

// ---- selftest -----------------------------------------------------------

int cmd_selftest() {
  int failures = 0;
  const auto check = [&](const std::string& name, bool ok) {
    std::cout << (ok ? "[ok]   " : "[FAIL] ") << name << "\n";
    if (!ok) ++failures;
  };
  iqnn::Rng rng(20260809);

  {
    bool ok = iqnn::rounding_divide_by_pot(-12, 3) == -2;
    for (int i = 0; ok && i < 100000; ++i) {
      const auto x = static_cast<std::int32_t>(rng.next_u32());
      const int n = static_cast<int>(rng.below(32));
      std::int64_t want;
      if (n == 0) {
        want = x;
      } else {
        const std::int64_t half = std::int64_t{1} << (n - 1);
        want = x >= 0 ? (x + half) >> n : -((-static_cast<std::int64_t>(x) + half) >> n);
      }
      ok = iqnn::rounding_divide_by_pot(x, n) == want;
    }
    check("rounding right shift matches round-half-away oracle", ok);
  }
  {
    bool ok =
        iqnn::saturating_rounding_doubling_high_mul(INT32_MIN, INT32_MIN) ==
        INT32_MAX;
    for (int i = 0; ok && i < 100000; ++i) {
      const auto a = static_cast<std::int32_t>(rng.next_u32());
      const auto b = static_cast<std::int32_t>(rng.next_u32());
      ok = iqnn::saturating_rounding_doubling_high_mul(a, b) ==
           iqnn::saturating_rounding_doubling_high_mul(b, a);
    }
    check("saturating doubling high-mul saturation and commutativity", ok);
  }
  {
    bool ok = true;
    for (int i = 0; ok && i < 10000; ++i) {
      const double m = rng.uniform(1e-10, 1.0 - 1e-12);
      const auto qm = iqnn::normalize_multiplier(m);
      ok = qm.m0_raw >= (1 << 30) &&
           std::abs(qm.reconstruct() - m) / m <= std::exp2(-30.0);
    }
    check("multiplier normalization keeps 30 bits of accuracy", ok);
  }
  {
    bool ok = true;
    for (int trial = 0; ok && trial < 100; ++trial) {
      const int m = rng.range(1, 8), n = rng.range(1, 8), k = rng.range(1, 8);
      iqnn::QuantParams pl, pr;
      pl.zero_point = rng.range(0, 255);
      pr.zero_point = rng.range(0, 255);
      iqnn::QuantizedTensor lhs(iqnn::Shape{m, n}, pl);
      iqnn::QuantizedTensor rhs(iqnn::Shape{n, k}, pr);
      for (auto& c : lhs.codes) c = static_cast<std::uint8_t>(rng.below(256));
      for (auto& c : rhs.codes) c = static_cast<std::uint8_t>(rng.below(256));
      const auto acc = iqnn::gemm_accumulators(lhs, rhs);
      for (int i = 0; ok && i < m; ++i) {
        for (int c = 0; ok && c < k; ++c) {
          std::int64_t want = 0;
          for (int j = 0; j < n; ++j) {
            want += (static_cast<std::int64_t>(lhs.codes[i * n + j]) -
                     pl.zero_point) *
                    (static_cast<std::int64_t>(rhs.codes[j * k + c]) -
                     pr.zero_point);
          }
          ok = acc[static_cast<std::size_t>(i) * k + c] == want;
        }
      }
    }
    check("zero-point factoring equals the subtract-first form", ok);
  }
  {
    bool ok = iqnn::fixed_tanh(iqnn::FixedQ<4>::from_raw(0)).raw() == 0 &&
              iqnn::fixed_logistic(iqnn::FixedQ<4>::from_raw(0)).raw() ==
                  (1 << 30);
    double max_err = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const auto x =
          iqnn::FixedQ<4>::from_raw(static_cast<std::int32_t>(rng.next_u32()));
      const double xd = x.to_double();
      max_err = std::max(max_err, std::abs(iqnn::fixed_tanh(x).to_double() -
                                           std::tanh(xd)));
      max_err = std::max(
          max_err, std::abs(iqnn::fixed_logistic(x).to_double() -
                            1.0 / (1.0 + std::exp(-xd))));
    }
    ok = ok && max_err <= std::exp2(-8.0);
    check("fixed-point tanh/logistic within 2^-8 of the float oracle", ok);
  }
  {
    bool ok = true;
    const auto nr = iqnn::choose_params(-3.0, 5.0, 8);
    for (int i = 0; ok && i < 10000; ++i) {
      const double v = rng.uniform(nr.a, nr.b);
      const double back =
          iqnn::dequantize(iqnn::quantize(v, nr.params), nr.params);
      ok = std::abs(back - v) <= nr.params.scale / 2 + 1e-12;
    }
    ok = ok && iqnn::dequantize(nr.params.zero_point, nr.params) == 0.0;
    check("quantize/dequantize round trip within half a step", ok);
  }
  {
    const iqnn::Dataset data = iqnn::make_blobs(600, 99);
    iqnn::TrainConfig cfg;
    cfg.steps = 500;
    cfg.eval_interval = 250;
    cfg.quant_delay_steps = 100;
    cfg.seed = 99;
    iqnn::FloatGraph model = iqnn::make_mlp(2, 8, 2);
    const iqnn::TrainResult tr = iqnn::train(std::move(model), data, cfg);
    const iqnn::QuantGraph qg = iqnn::convert(tr.graph);
    const iqnn::Tensor inputs = dataset_features(data, 0, 256);
    const iqnn::CorrespondenceReport report =
        iqnn::verify_correspondence(tr.graph, qg, inputs);
    check("trained model correspondence within one code",
          report.max_divergence() <= 1 && report.argmax_agreement >= 0.99);
    check("inference path is integer-only",
          iqnn::audit_integer_only(qg, iqnn::quantize_input(qg, inputs)));
  }
  if (failures > 0) {
    std::cerr << failures << " selftest check(s) failed\n";
    return kExitVerification;
  }
  std::cout << "all selftest checks passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"integer-only quantized neural network toolkit"};
  app.require_subcommand(1);

  TrainFlags tf;
  auto* train_cmd =
      app.add_subcommand("train", "train a model with simulated quantization");
  train_cmd->add_option("--dataset", tf.dataset,
                        "dataset file or synth:<name>?k=v&...")
      ->required();
  train_cmd->add_option("--out", tf.out, "output float model path (IQF1)")
      ->required();
  train_cmd->add_option("--model", tf.model,
                        "preset: mlp | mlp2 | mlp2-bn | convnet | resmini | "
                        "catnet");
  train_cmd->add_option("--hidden", tf.hidden, "hidden width for mlp presets");
  train_cmd->add_option("--channels", tf.channels,
                        "channel count for conv presets");
  train_cmd->add_option("--bits-weights", tf.cfg.weight_bits,
                        "weight quantization bit depth")
      ->check(CLI::Range(4, 8));
  train_cmd->add_option("--bits-activations", tf.cfg.activation_bits,
                        "activation quantization bit depth")
      ->check(CLI::Range(4, 8));
  train_cmd->add_option("--quant-delay", tf.cfg.quant_delay_steps,
                        "steps before activation quantization; -1 = float");
  train_cmd->add_option("--ema-decay", tf.cfg.ema_decay,
                        "range observer smoothing");
  train_cmd->add_option("--lr", tf.cfg.learning_rate, "learning rate");
  train_cmd->add_option("--lr-decay-factor", tf.cfg.lr_decay_factor,
                        "staircase decay factor");
  train_cmd->add_option("--lr-decay-steps", tf.cfg.lr_decay_steps,
                        "steps per decay staircase");
  train_cmd->add_option("--momentum", tf.cfg.momentum, "SGD momentum");
  train_cmd->add_option("--batch-size", tf.cfg.batch_size, "batch size");
  train_cmd->add_option("--steps", tf.cfg.steps, "training steps");
  train_cmd->add_option("--eval-interval", tf.cfg.eval_interval,
                        "steps between log lines");
  train_cmd->add_option("--eval-fraction", tf.cfg.eval_fraction,
                        "held-out fraction");
  train_cmd->add_option("--seed", tf.cfg.seed, "RNG seed");

  std::string q_model, q_out;
  auto* quant_cmd = app.add_subcommand(
      "quantize", "convert a float model to an integer model");
  quant_cmd->add_option("--model", q_model, "trained float model (IQF1)")
      ->required()
      ->check(CLI::ExistingFile);
  quant_cmd->add_option("--out", q_out, "output integer model path (IQM1)")
      ->required();

  std::string i_model, i_dataset, i_out;
  int i_threads = 1;
  std::uint64_t i_seed = 1;
  auto* infer_cmd =
      app.add_subcommand("infer", "run integer inference on a dataset");
  infer_cmd->add_option("--model", i_model, "integer model (IQM1)")
      ->required()
      ->check(CLI::ExistingFile);
  infer_cmd->add_option("--dataset", i_dataset, "dataset file or synth:...")
      ->required();
  infer_cmd->add_option("--out", i_out, "write predictions here");
  infer_cmd->add_option("--threads", i_threads, "worker threads")
      ->check(CLI::Range(1, 64));
  infer_cmd->add_option("--seed", i_seed, "recorded in outputs");

  std::string v_float, v_model, v_dataset, v_out;
  std::size_t v_samples = 1000;
  int v_max_diff = 1;
  double v_min_agreement = 0.99;
  auto* verify_cmd = app.add_subcommand(
      "verify", "compare simulated and integer execution");
  verify_cmd->add_option("--float-model", v_float, "float model (IQF1)")
      ->required()
      ->check(CLI::ExistingFile);
  verify_cmd->add_option("--model", v_model, "integer model (IQM1)")
      ->required()
      ->check(CLI::ExistingFile);
  verify_cmd->add_option("--dataset", v_dataset, "dataset file or synth:...")
      ->required();
  verify_cmd->add_option("--out", v_out, "write the report here");
  verify_cmd->add_option("--samples", v_samples, "samples to compare");
  verify_cmd->add_option("--max-code-diff", v_max_diff,
                         "maximum per-layer divergence");
  verify_cmd->add_option("--min-agreement", v_min_agreement,
                         "minimum argmax agreement");

  std::vector<int> b_sizes = {64, 128, 256};
  int b_reps = 25, b_threads = 1;
  std::string b_out;
  std::uint64_t b_seed = 1;
  auto* bench_cmd = app.add_subcommand(
      "bench", "time the integer matmul against a float reference");
  bench_cmd->add_option("--sizes", b_sizes, "square matrix sizes")
      ->delimiter(',');
  bench_cmd->add_option("--reps", b_reps, "timed repetitions")
      ->check(CLI::Range(1, 1000));
  bench_cmd->add_option("--threads", b_threads, "worker threads")
      ->check(CLI::Range(1, 64));
  bench_cmd->add_option("--out", b_out, "write the report here");
  bench_cmd->add_option("--seed", b_seed, "RNG seed for operand data");

  auto* selftest_cmd =
      app.add_subcommand("selftest", "run the built-in invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(tf);
    if (quant_cmd->parsed()) return cmd_quantize(q_model, q_out);
    if (infer_cmd->parsed()) {
      return cmd_infer(i_model, i_dataset, i_out, i_threads, i_seed);
    }
    if (verify_cmd->parsed()) {
      return cmd_verify(v_float, v_model, v_dataset, v_out, v_samples,
                        v_max_diff, v_min_agreement);
    }
    if (bench_cmd->parsed()) {
      return cmd_bench(b_sizes, b_reps, b_threads, b_out, b_seed);
    }
    if (selftest_cmd->parsed()) return cmd_selftest();
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const iqnn::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const iqnn::TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
