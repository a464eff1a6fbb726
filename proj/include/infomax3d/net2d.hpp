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

#include <cstdint>
#include <string>
#include <vector>

#include "infomax3d/autodiff.hpp"
#include "infomax3d/batch.hpp"
#include "infomax3d/nn.hpp"

namespace infomax3d {

enum class Scaler { kIdentity, kAmplification, kAttenuation };

std::string_view to_string(Scaler s);
Scaler           parse_scaler(std::string_view name);

struct Net2DConfig {
  std::size_t                 depth              = 7;
  std::size_t                 d_h                = 200;
  std::size_t                 d_z                = 256;
  std::size_t                 message_mlp_layers = 2;
  std::size_t                 update_mlp_layers  = 1;
  std::size_t                 readout_mlp_layers = 2;
  std::vector<nn::Aggregator> aggregators = {nn::Aggregator::kMean, nn::Aggregator::kMax, nn::Aggregator::kMin,
                                             nn::Aggregator::kStd};
  std::vector<Scaler>         scalers     = {Scaler::kIdentity, Scaler::kAmplification, Scaler::kAttenuation};
  std::vector<nn::Aggregator> readout_aggregators = {nn::Aggregator::kMean, nn::Aggregator::kMax,
                                                     nn::Aggregator::kMin, nn::Aggregator::kSum};
  double      dropout            = 0.0;
  bool        batch_norm         = true;
  double      batchnorm_momentum = 0.1;
  bool        residual           = true;
  //! Vectors emitted per molecule (c for the multi-conformer 2D losses).
  std::size_t num_outputs = 1;

  //! Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const Net2DConfig&) const = default;
};

//! Mean of log(degree + 1) over every atom of the dataset.
double estimate_degree_delta(const Dataset& dataset);

//! PNA-style 2D encoder. Parameters live under the "net2d." prefix.
class Net2D {
 public:
  struct Output {
    ad::Var z;      // num_graphs x (num_outputs * d_z)
    ad::Var nodes;  // num_nodes x d_h after the last layer
  };

  Net2D(const Net2DConfig& config, std::uint64_t seed);

  [[nodiscard]] const Net2DConfig&    config() const { return config_; }
  [[nodiscard]] ad::ParamStore&       params() { return params_; }
  [[nodiscard]] const ad::ParamStore& params() const { return params_; }

  void                 set_degree_delta(double delta);
  [[nodiscard]] double degree_delta() const;

  Output  forward(ad::Tape& tape, const GraphBatch& batch, const nn::Mode& mode);
  ad::Var embed_nodes(ad::Tape& tape, const GraphBatch& batch);
  //! One message-passing layer applied to node states h given encoded edges e.
  ad::Var layer(ad::Tape& tape, const GraphBatch& batch, std::size_t index, const ad::Var& h, const ad::Var& e,
                const nn::Mode& mode);
  ad::Var readout(ad::Tape& tape, const GraphBatch& batch, const ad::Var& h);

  //! Eval-mode z^a of one molecule (1 x num_outputs * d_z).
  Tensor encode(const MolecularGraph& graph);

 private:
  Net2DConfig    config_;
  ad::ParamStore params_;
};

}  // namespace infomax3d
