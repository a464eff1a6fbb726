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

#include "infomax3d/nn.hpp"

#include <cmath>

namespace infomax3d::nn {

void add_linear(ad::ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  const double                           bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor                                 w(in, out);
  for (auto& v : w.data()) v = u(rng);
  store.add(prefix + ".weight", std::move(w));
  store.add(prefix + ".bias", Tensor(1, out));
}

ad::Var linear(ad::Tape& tape, ad::ParamStore& store, const std::string& prefix, const ad::Var& x) {
  return ad::add(ad::matmul(x, tape.param(store, prefix + ".weight")), tape.param(store, prefix + ".bias"));
}

void add_batch_norm(ad::ParamStore& store, const std::string& prefix, std::size_t width) {
  store.add(prefix + ".gamma", Tensor(1, width, 1.0));
  store.add(prefix + ".beta", Tensor(1, width));
  store.add_buffer(prefix + ".running_mean", Tensor(1, width));
  store.add_buffer(prefix + ".running_var", Tensor(1, width, 1.0));
}

ad::Var batch_norm(ad::Tape& tape, ad::ParamStore& store, const std::string& prefix, const ad::Var& x,
                   double momentum, const Mode& mode) {
  ad::BatchNormState state;
  state.running_mean = &store.buffer(prefix + ".running_mean");
  state.running_var  = &store.buffer(prefix + ".running_var");
  state.momentum     = momentum;
  return ad::batch_norm(x, tape.param(store, prefix + ".gamma"), tape.param(store, prefix + ".beta"), state,
                        mode.train);
}

bool is_batch_norm_param(const std::string& name) {
  return name.ends_with(".gamma") || name.ends_with(".beta");
}

void add_mlp(ad::ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) {
    throw std::invalid_argument("add_mlp: need at least input and output widths for '" + prefix + "'");
  }
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    add_linear(store, prefix + "." + std::to_string(l), widths[l], widths[l + 1], rng);
  }
}

ad::Var mlp(ad::Tape& tape, ad::ParamStore& store, const std::string& prefix, std::size_t layers, const ad::Var& x) {
  ad::Var h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    h = linear(tape, store, prefix + "." + std::to_string(l), h);
    if (l + 1 < layers) h = ad::relu(h);
  }
  return h;
}

std::string_view to_string(Aggregator a) {
  switch (a) {
    case Aggregator::kMean: return "mean";
    case Aggregator::kMax: return "max";
    case Aggregator::kMin: return "min";
    case Aggregator::kStd: return "std";
    case Aggregator::kSum: return "sum";
  }
  return "?";
}

Aggregator parse_aggregator(std::string_view name) {
  for (Aggregator a : {Aggregator::kMean, Aggregator::kMax, Aggregator::kMin, Aggregator::kStd, Aggregator::kSum}) {
    if (to_string(a) == name) return a;
  }
  throw std::invalid_argument("unknown aggregator '" + std::string(name) + "' (use mean, max, min, std or sum)");
}

ad::Var aggregate(const ad::Var& x, const kernels::Segments& seg, Aggregator a) {
  switch (a) {
    case Aggregator::kMean: return ad::segment_mean(x, seg);
    case Aggregator::kMax: return ad::segment_max(x, seg);
    case Aggregator::kMin: return ad::segment_min(x, seg);
    case Aggregator::kStd: return ad::segment_std(x, seg);
    case Aggregator::kSum: return ad::segment_sum(x, seg);
  }
  throw std::logic_error("aggregate: bad aggregator");
}

ad::Var pool(const ad::Var& x, const kernels::Segments& seg, const std::vector<Aggregator>& aggregators) {
  if (aggregators.empty()) {
    throw std::invalid_argument("pool: aggregator list is empty");
  }
  std::vector<ad::Var> parts;
  parts.reserve(aggregators.size());
  for (Aggregator a : aggregators) parts.push_back(aggregate(x, seg, a));
  return parts.size() == 1 ? parts.front() : ad::concat_cols(parts);
}

}  // namespace infomax3d::nn
