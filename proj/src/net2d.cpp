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

#include "infomax3d/net2d.hpp"

#include <cmath>
#include <stdexcept>

namespace infomax3d {

namespace {

std::string layer_prefix(std::size_t l) { return "net2d.layer" + std::to_string(l); }

std::vector<std::size_t> mlp_widths(std::size_t in, std::size_t hidden, std::size_t out, std::size_t layers) {
  std::vector<std::size_t> w{in};
  for (std::size_t l = 1; l < layers; ++l) w.push_back(hidden);
  w.push_back(out);
  return w;
}

}  // namespace

std::string_view to_string(Scaler s) {
  switch (s) {
    case Scaler::kIdentity: return "identity";
    case Scaler::kAmplification: return "amplification";
    case Scaler::kAttenuation: return "attenuation";
  }
  return "?";
}

Scaler parse_scaler(std::string_view name) {
  for (Scaler s : {Scaler::kIdentity, Scaler::kAmplification, Scaler::kAttenuation}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown scaler '" + std::string(name) +
                              "' (use identity, amplification or attenuation)");
}

void Net2DConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("net2d config: " + what);
  };
  require(depth >= 1, "depth must be >= 1");
  require(d_h >= 1 && d_z >= 1, "d_h and d_z must be >= 1");
  require(message_mlp_layers >= 1 && update_mlp_layers >= 1 && readout_mlp_layers >= 1,
          "MLP layer counts must be >= 1");
  require(!aggregators.empty(), "aggregators must not be empty");
  require(!scalers.empty(), "scalers must not be empty");
  require(!readout_aggregators.empty(), "readout_aggregators must not be empty");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(batchnorm_momentum >= 0.0 && batchnorm_momentum <= 1.0, "batchnorm_momentum must be in [0, 1]");
  require(num_outputs >= 1, "num_outputs must be >= 1");
}

double estimate_degree_delta(const Dataset& dataset) {
  double      s = 0.0;
  std::size_t n = 0;
  for (const auto& g : dataset.molecules) {
    for (const auto& a : g.atoms) {
      s += std::log(static_cast<double>(a.degree) + 1.0);
      ++n;
    }
  }
  if (n == 0 || s <= 0.0) {
    throw std::invalid_argument("estimate_degree_delta: dataset has no bonded atoms");
  }
  return s / static_cast<double>(n);
}

Net2D::Net2D(const Net2DConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  params_.init_seed = seed;
  Rng               rng(seed);
  const std::size_t d = config_.d_h;
  nn::add_linear(params_, "net2d.node_enc", kAtomFeatureDim, d, rng);
  nn::add_linear(params_, "net2d.edge_enc", kBondFeatureDim, d, rng);
  const std::size_t agg_width = config_.aggregators.size() * config_.scalers.size() * d;
  for (std::size_t l = 0; l < config_.depth; ++l) {
    nn::add_mlp(params_, layer_prefix(l) + ".msg", mlp_widths(3 * d, d, d, config_.message_mlp_layers), rng);
    nn::add_mlp(params_, layer_prefix(l) + ".upd", mlp_widths(d + agg_width, d, d, config_.update_mlp_layers), rng);
    if (config_.batch_norm) nn::add_batch_norm(params_, layer_prefix(l) + ".bn", d);
  }
  nn::add_mlp(params_, "net2d.readout",
              mlp_widths(config_.readout_aggregators.size() * d, d, config_.num_outputs * config_.d_z,
                         config_.readout_mlp_layers),
              rng);
  params_.add_buffer("net2d.degree_delta", Tensor::scalar(1.0));
}

void Net2D::set_degree_delta(double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument("degree delta must be positive and finite");
  }
  params_.buffer("net2d.degree_delta")(0, 0) = delta;
}

double Net2D::degree_delta() const { return params_.buffer("net2d.degree_delta")(0, 0); }

ad::Var Net2D::embed_nodes(ad::Tape& tape, const GraphBatch& batch) {
  return nn::linear(tape, params_, "net2d.node_enc", tape.constant(batch.node_features));
}

ad::Var Net2D::layer(ad::Tape& tape, const GraphBatch& batch, std::size_t index, const ad::Var& h, const ad::Var& e,
                     const nn::Mode& mode) {
  const std::string prefix = layer_prefix(index);
  std::vector<ad::Var> parts{h};
  if (!batch.edge_src.empty()) {
    const ad::Var hu[] = {ad::gather_rows(h, batch.edge_dst), ad::gather_rows(h, batch.edge_src), e};
    const ad::Var msg  = nn::mlp(tape, params_, prefix + ".msg", config_.message_mlp_layers, ad::concat_cols(hu));
    const double  delta = degree_delta();
    Tensor        amp(batch.num_nodes, 1, 1.0);
    Tensor        att(batch.num_nodes, 1, 1.0);
    for (std::size_t i = 0; i < batch.num_nodes; ++i) {
      if (batch.degree[i] > 0.0) {
        const double ld = std::log(batch.degree[i] + 1.0);
        amp(i, 0)       = ld / delta;
        att(i, 0)       = delta / ld;
      }
    }
    const ad::Var amp_v = tape.constant(std::move(amp));
    const ad::Var att_v = tape.constant(std::move(att));
    for (nn::Aggregator a : config_.aggregators) {
      const ad::Var agg = nn::aggregate(msg, batch.incoming, a);
      for (Scaler s : config_.scalers) {
        switch (s) {
          case Scaler::kIdentity: parts.push_back(agg); break;
          case Scaler::kAmplification: parts.push_back(ad::mul(agg, amp_v)); break;
          case Scaler::kAttenuation: parts.push_back(ad::mul(agg, att_v)); break;
        }
      }
    }
  } else {
    const std::size_t width = config_.aggregators.size() * config_.scalers.size() * config_.d_h;
    parts.push_back(tape.constant(Tensor(batch.num_nodes, width)));
  }
  ad::Var out = ad::relu(nn::mlp(tape, params_, prefix + ".upd", config_.update_mlp_layers, ad::concat_cols(parts)));
  if (config_.dropout > 0.0 && mode.train) {
    if (mode.rng == nullptr) throw std::invalid_argument("net2d: dropout in training mode needs an rng");
    out = ad::dropout(out, config_.dropout, *mode.rng, true);
  }
  if (config_.residual) out = ad::add(h, out);
  if (config_.batch_norm) out = nn::batch_norm(tape, params_, prefix + ".bn", out, config_.batchnorm_momentum, mode);
  return out;
}

ad::Var Net2D::readout(ad::Tape& tape, const GraphBatch& batch, const ad::Var& h) {
  const ad::Var pooled = nn::pool(h, batch.graph_nodes, config_.readout_aggregators);
  return nn::mlp(tape, params_, "net2d.readout", config_.readout_mlp_layers, pooled);
}

Net2D::Output Net2D::forward(ad::Tape& tape, const GraphBatch& batch, const nn::Mode& mode) {
  ad::Var       h = embed_nodes(tape, batch);
  const ad::Var e = nn::linear(tape, params_, "net2d.edge_enc", tape.constant(batch.edge_features));
  for (std::size_t l = 0; l < config_.depth; ++l) h = layer(tape, batch, l, h, e, mode);
  return Output{readout(tape, batch, h), h};
}

Tensor Net2D::encode(const MolecularGraph& graph) {
  const MolecularGraph* g[] = {&graph};
  const GraphBatch      batch = make_graph_batch(g);
  ad::Tape              tape;
  return forward(tape, batch, nn::Mode{}).z.value();
}

}  // namespace infomax3d
