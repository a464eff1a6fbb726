// Copyright 2026 The Infomax3D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Layer helpers over a ParamStore. A layer owns the parameters
// "<prefix>.weight" (in x out) and "<prefix>.bias" (1 x out); a batch-norm
// layer owns "<prefix>.gamma", "<prefix>.beta" and the buffers
// "<prefix>.running_mean", "<prefix>.running_var".

#include <string>
#include <string_view>
#include <vector>

#include "infomax3d/autodiff.hpp"

namespace infomax3d::nn {

//! Training-mode switch and dropout randomness for one forward pass.
struct Mode {
  bool train = false;
  Rng* rng   = nullptr;
};

//! Weight uniform in +-sqrt(6 / (in + out)), zero bias.
void    add_linear(ad::ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);
ad::Var linear(ad::Tape& tape, ad::ParamStore& store, const std::string& prefix, const ad::Var& x);

//! gamma = 1, beta = 0, running mean 0, running variance 1.
void    add_batch_norm(ad::ParamStore& store, const std::string& prefix, std::size_t width);
ad::Var batch_norm(ad::Tape& tape, ad::ParamStore& store, const std::string& prefix, const ad::Var& x,
                   double momentum, const Mode& mode);
[[nodiscard]] bool is_batch_norm_param(const std::string& name);

//! Stack of affine maps with relu between them (none after the last).
//! widths = {in, hidden..., out}; layers are "<prefix>.0", "<prefix>.1", ...
void    add_mlp(ad::ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& widths, Rng& rng);
ad::Var mlp(ad::Tape& tape, ad::ParamStore& store, const std::string& prefix, std::size_t layers, const ad::Var& x);

enum class Aggregator { kMean, kMax, kMin, kStd, kSum };

std::string_view to_string(Aggregator a);
//! Accepts "mean", "max", "min", "std", "sum"; throws std::invalid_argument otherwise.
Aggregator parse_aggregator(std::string_view name);

//! One output row per segment.
ad::Var aggregate(const ad::Var& x, const kernels::Segments& seg, Aggregator a);
//! Column concatenation of every aggregator in order.
ad::Var pool(const ad::Var& x, const kernels::Segments& seg, const std::vector<Aggregator>& aggregators);

}  // namespace infomax3d::nn
