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

// Minimal library walkthrough: train a small model with simulated
// quantization, lower it to the integer graph, and classify with
// integer-only arithmetic.

#include <iostream>

#include "iqnn/iqnn.hpp"

int main() {
  // A two-ring classification task.
  const iqnn::Dataset data = iqnn::make_rings(3000, /*seed=*/7);
  const iqnn::Dataset test = iqnn::make_rings(500, /*seed=*/11);

  // Train with fake quantization; activations start quantizing at step 400.
  iqnn::TrainConfig cfg;
  cfg.steps = 2000;
  cfg.quant_delay_steps = 400;
  cfg.seed = 1;
  iqnn::FloatGraph model = iqnn::make_mlp2(2, 24, 2, /*with_bn=*/true);
  const iqnn::TrainResult trained = iqnn::train(std::move(model), data, cfg);
  std::cout << "simulated-quantized eval accuracy: "
            << trained.final_eval_acc << "\n";

  // Lower to the integer-only graph and run it.
  const iqnn::QuantGraph qg = iqnn::convert(trained.graph);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.count(); ++i) {
    iqnn::Tensor sample(iqnn::Shape{1, 2});
    sample.v = {test.sample(i)[0], test.sample(i)[1]};
    const iqnn::QuantizedTensor out =
        iqnn::run_inference(qg, iqnn::quantize_input(qg, sample));
    const int pred = out.codes[1] > out.codes[0] ? 1 : 0;
    if (pred == test.labels[i]) ++correct;
  }
  std::cout << "integer-only accuracy: "
            << static_cast<double>(correct) / test.count() << "\n";
  return 0;
}
