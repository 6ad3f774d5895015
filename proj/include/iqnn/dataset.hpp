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
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "iqnn/io.hpp"
#include "iqnn/rng.hpp"

namespace iqnn {

// In-memory labelled dataset; features are stored per sample as H*W*C
// doubles in row-major HWC order.
struct Dataset {
  int h = 1, w = 1, c = 1;
  int num_classes = 2;
  std::vector<double> features;  // count * h * w * c
  std::vector<std::uint16_t> labels;

  std::size_t count() const { return labels.size(); }
  std::size_t feature_dim() const {
    return static_cast<std::size_t>(h) * w * c;
  }
  const double* sample(std::size_t i) const {
    return features.data() + i * feature_dim();
  }
};

// Binary dataset file: magic "IQDS", version u16, sample count u32,
// dims u32 x3 (H, W, C), class count u16, then per sample the f32
// features followed by a u16 label. Little-endian throughout.
inline void save_iqds(const Dataset& d, const std::string& path) {
  ByteWriter w;
  w.bytes("IQDS", 4);
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(d.count()));
  w.u32(static_cast<std::uint32_t>(d.h));
  w.u32(static_cast<std::uint32_t>(d.w));
  w.u32(static_cast<std::uint32_t>(d.c));
  w.u16(static_cast<std::uint16_t>(d.num_classes));
  for (std::size_t i = 0; i < d.count(); ++i) {
    const double* f = d.sample(i);
    for (std::size_t j = 0; j < d.feature_dim(); ++j) {
      w.f32(static_cast<float>(f[j]));
    }
    w.u16(d.labels[i]);
  }
  w.write_file(path);
}

inline Dataset load_iqds(const std::string& path) {
  ByteReader r(read_file(path));
  char magic[4];
  r.bytes(magic, 4);
  if (std::string(magic, 4) != "IQDS") {
    throw DataError("not a dataset file (bad magic): " + path);
  }
  const std::uint16_t version = r.u16();
  if (version != 1) {
    throw DataError("unsupported dataset version " + std::to_string(version));
  }
  Dataset d;
  const std::uint32_t count = r.u32();
  d.h = static_cast<int>(r.u32());
  d.w = static_cast<int>(r.u32());
  d.c = static_cast<int>(r.u32());
  d.num_classes = r.u16();
  if (d.h < 1 || d.w < 1 || d.c < 1 || d.h > 4096 || d.w > 4096 ||
      d.c > 4096 || d.num_classes < 2) {
    throw DataError("dataset header is inconsistent");
  }
  // The payload size is implied by the header; verify before allocating.
  const std::uint64_t expected =
      static_cast<std::uint64_t>(count) * (d.feature_dim() * 4 + 2);
  if (r.remaining() != expected) {
    throw DataError("dataset payload does not match its header");
  }
  d.features.reserve(static_cast<std::size_t>(count) * d.feature_dim());
  d.labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < d.feature_dim(); ++j) {
      d.features.push_back(static_cast<double>(r.f32()));
    }
    const std::uint16_t label = r.u16();
    if (label >= d.num_classes) {
      throw DataError("label out of range in sample " + std::to_string(i));
    }
    d.labels.push_back(label);
  }
  r.expect_end();
  return d;
}

// Two linearly separable Gaussian blobs in the plane.
inline Dataset make_blobs(std::size_t n, std::uint64_t seed,
                          double separation = 3.0, double spread = 0.6) {
  Dataset d;
  d.h = 1;
  d.w = 1;
  d.c = 2;
  d.num_classes = 2;
  Rng rng(seed, 0x10);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(2));
    const double cx = label == 0 ? -separation / 2 : separation / 2;
    const double cy = label == 0 ? -separation / 4 : separation / 4;
    d.features.push_back(cx + spread * rng.normal());
    d.features.push_back(cy + spread * rng.normal());
    d.labels.push_back(static_cast<std::uint16_t>(label));
  }
  return d;
}

// Two concentric rings; nonlinear, with a controllable margin between the
// outer radius of class 0 and the inner radius of class 1.
inline Dataset make_rings(std::size_t n, std::uint64_t seed, double gap = 0.3,
                          double noise = 0.06) {
  Dataset d;
  d.h = 1;
  d.w = 1;
  d.c = 2;
  d.num_classes = 2;
  Rng rng(seed, 0x20);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(2));
    const double r0 = label == 0 ? rng.uniform(0.0, 0.5)
                                 : rng.uniform(0.5 + gap, 1.0 + gap);
    const double angle = rng.uniform(0.0, 6.283185307179586);
    const double radius = r0 + noise * rng.normal();
    d.features.push_back(radius * std::cos(angle));
    d.features.push_back(radius * std::sin(angle));
    d.labels.push_back(static_cast<std::uint16_t>(label));
  }
  return d;
}

// Tiny image task: horizontal vs vertical stripes with a random phase and
// additive noise. Convolutions pick this up within a few hundred steps.
inline Dataset make_stripes(std::size_t n, int h, int w, std::uint64_t seed,
                            double noise = 0.25) {
  Dataset d;
  d.h = h;
  d.w = w;
  d.c = 1;
  d.num_classes = 2;
  Rng rng(seed, 0x30);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(2));
    const int phase = static_cast<int>(rng.below(2));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int stripe = label == 0 ? y : x;
        const double base = ((stripe + phase) % 2 == 0) ? 1.0 : -1.0;
        d.features.push_back(base + noise * rng.normal());
      }
    }
    d.labels.push_back(static_cast<std::uint16_t>(label));
  }
  return d;
}

// Parses "synth:<name>?k=v&k=v" sources; anything else is treated as a
// dataset file path.
inline Dataset load_dataset(const std::string& source) {
  if (source.rfind("synth:", 0) != 0) {
    return load_iqds(source);
  }
  std::string rest = source.substr(6);
  std::string name = rest;
  std::string query;
  if (const auto qpos = rest.find('?'); qpos != std::string::npos) {
    name = rest.substr(0, qpos);
    query = rest.substr(qpos + 1);
  }
  std::size_t n = 2000;
  std::uint64_t seed = 1;
  int h = 8, w = 8;
  double gap = 0.3, noise = -1.0;
  while (!query.empty()) {
    std::string kv = query;
    if (const auto amp = query.find('&'); amp != std::string::npos) {
      kv = query.substr(0, amp);
      query = query.substr(amp + 1);
    } else {
      query.clear();
    }
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw DataError("bad synthetic dataset parameter: " + kv);
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    try {
      if (key == "n") {
        n = static_cast<std::size_t>(std::stoull(value));
      } else if (key == "seed") {
        seed = std::stoull(value);
      } else if (key == "h") {
        h = std::stoi(value);
      } else if (key == "w") {
        w = std::stoi(value);
      } else if (key == "gap") {
        gap = std::stod(value);
      } else if (key == "noise") {
        noise = std::stod(value);
      } else {
        throw DataError("unknown synthetic dataset parameter: " + key);
      }
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      throw DataError("bad value for synthetic dataset parameter " + key);
    }
  }
  if (name == "blobs") {
    return make_blobs(n, seed);
  }
  if (name == "rings") {
    return make_rings(n, seed, gap, noise < 0 ? 0.06 : noise);
  }
  if (name == "stripes") {
    return make_stripes(n, h, w, seed, noise < 0 ? 0.25 : noise);
  }
  throw DataError("unknown synthetic dataset: " + name);
}

}  // namespace iqnn
