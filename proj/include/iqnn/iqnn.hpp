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

#include "iqnn/convert.hpp"
#include "iqnn/dataset.hpp"
#include "iqnn/fixedpoint.hpp"
#include "iqnn/graph.hpp"
#include "iqnn/kernels.hpp"
#include "iqnn/quantization.hpp"
#include "iqnn/serialize.hpp"
#include "iqnn/simtrain.hpp"
#include "iqnn/tensor.hpp"
#include "iqnn/train.hpp"
