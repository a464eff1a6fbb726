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

#include "infomax3d/net3d.hpp"

#include <stdexcept>
#include <string>

namespace infomax3d {

namespace {

std::string layer_prefix(std::size_t l) { return "net3d.layer" + std::to_string(l); }

}  // namespace

void Net3DConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("net3d config: " + what);
  };
  require(depth >= 1, "depth must be >= 1");
  require(d_h >= 1 && d_d >= 1 && d_z >= 1, "d_h, d_d and d_z must be >= 1");
  require(frequencies >= 0, "frequencies must be >= 0");
  require(!readout_aggregators.empty(), "readout_aggregators must not be empty");
  require(readout_mlp_layers >= 1, "readout_mlp_layers must be >= 1");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(batchnorm_momentum >= 0.0 && batchnorm_momentum <= 1.0, "batchnorm_momentum must be in [0, 1]");
}

Net3D::Net3D(const Net3DConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  params_.init_seed = seed;
  Rng               rng(seed);
  const std::size_t h = config_.d_h;
  const std::size_t d = config_.d_d;
  Tensor            h0(1, h);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : h0.data()) v = normal(rng);
  params_.add("net3d.h0", std::move(h0));
  nn::add_linear(params_, "net3d.init", static_cast<std::size_t>(2 * config_.frequencies + 1), d, rng);
  for (std::size_t l = 0; l < config_.depth; ++l) {
    nn::add_linear(params_, layer_prefix(l) + ".edge", 2 * h + d, d, rng);
    nn::add_linear(params_, layer_prefix(l) + ".soft", d, 1, rng);
    nn::add_linear(params_, layer_prefix(l) + ".node", h + d, h, rng);
    if (config_.batch_norm) nn::add_batch_norm(params_, layer_prefix(l) + ".bn", h);
  }
  std::vector<std::size_t> widths{config_.readout_aggregators.size() * h};
  for (std::size_t l = 1; l < config_.readout_mlp_layers; ++l) widths.push_back(h);
  widths.push_back(config_.d_z);
  nn::add_mlp(params_, "net3d.readout", widths, rng);
}

ad::Var Net3D::init_edges(ad::Tape& tape, const PointCloudBatch& batch) {
  if (batch.edge_encoding.cols() != static_cast<std::size_t>(2 * config_.frequencies + 1)) {
    throw std::invalid_argument("net3d: batch encoded with a different number of frequencies");
  }
  return nn::linear(tape, params_, "net3d.init", tape.constant(batch.edge_encoding));
}

ad::Var Net3D::init_nodes(ad::Tape& tape, const PointCloudBatch& batch) {
  const std::vector<std::size_t> zeros(batch.num_nodes, 0);
  return ad::gather_rows(tape.param(params_, "net3d.h0"), zeros);
}

Net3D::LayerOutput Net3D::layer(ad::Tape& tape, const PointCloudBatch& batch, std::size_t index, const ad::Var& h,
                                const ad::Var& d, const nn::Mode& mode) {
  const std::string prefix = layer_prefix(index);
  ad::Var           agg;
  ad::Var           d_next = d;
  if (!batch.edge_src.empty()) {
    const ad::Var in[] = {ad::gather_rows(h, batch.edge_dst), ad::gather_rows(h, batch.edge_src), d};
    const ad::Var m    = nn::linear(tape, params_, prefix + ".edge", ad::concat_cols(in));
    d_next             = ad::add(d, m);
    const ad::Var gate = ad::sigmoid(nn::linear(tape, params_, prefix + ".soft", m));
    agg                = ad::segment_sum(ad::mul(m, gate), batch.incoming);
  } else {
    agg = tape.constant(Tensor(batch.num_nodes, config_.d_d));
  }
  const ad::Var parts[] = {h, agg};
  ad::Var       h_next  = nn::linear(tape, params_, prefix + ".node", ad::concat_cols(parts));
  if (config_.batch_norm) {
    h_next = nn::batch_norm(tape, params_, prefix + ".bn", h_next, config_.batchnorm_momentum, mode);
  }
  if (config_.dropout > 0.0 && mode.train) {
    if (mode.rng == nullptr) throw std::invalid_argument("net3d: dropout in training mode needs an rng");
    h_next = ad::dropout(h_next, config_.dropout, *mode.rng, true);
  }
  return LayerOutput{h_next, d_next};
}

ad::Var Net3D::forward(ad::Tape& tape, const PointCloudBatch& batch, const nn::Mode& mode) {
  ad::Var h = init_nodes(tape, batch);
  ad::Var d = init_edges(tape, batch);
  for (std::size_t l = 0; l < config_.depth; ++l) {
    auto out = layer(tape, batch, l, h, d, mode);
    h        = out.h;
    d        = out.d;
  }
  const ad::Var pooled = nn::pool(h, batch.graph_nodes, config_.readout_aggregators);
  return nn::mlp(tape, params_, "net3d.readout", config_.readout_mlp_layers, pooled);
}

Tensor Net3D::encode(const Tensor& coords) {
  const Tensor*         c[]   = {&coords};
  const PointCloudBatch batch = make_point_cloud_batch(c, config_.frequencies);
  ad::Tape              tape;
  return forward(tape, batch, nn::Mode{}).value();
}

}  // namespace infomax3d
