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
#include <vector>

#include "infomax3d/autodiff.hpp"
#include "infomax3d/batch.hpp"
#include "infomax3d/nn.hpp"

namespace infomax3d {

struct Net3DConfig {
  std::size_t                 depth       = 1;
  std::size_t                 d_h         = 20;
  std::size_t                 d_d         = 20;
  int                         frequencies = kDefaultFrequencies;
  std::size_t                 d_z         = 256;
  std::vector<nn::Aggregator> readout_aggregators = {nn::Aggregator::kMean, nn::Aggregator::kMax,
                                                     nn::Aggregator::kStd};
  std::size_t readout_mlp_layers = 1;
  double      dropout            = 0.0;
  bool        batch_norm         = true;
  double      batchnorm_momentum = 0.93;

  void validate() const;
  bool operator==(const Net3DConfig&) const = default;
};

//! 3D encoder over the complete distance graph. Parameters live under "net3d.".
//! Per layer, with affine maps U:
//!   m_uv  = U_edge(h_u | h_v | d_uv)
//!   d'_uv = d_uv + m_uv
//!   h'_u  = U_h(h_u | sum_{v != u} m_uv * sigmoid(U_soft(m_uv)))
//! followed by batch norm on the node states.
class Net3D {
 public:
  struct LayerOutput {
    ad::Var h;
    ad::Var d;
  };

  Net3D(const Net3DConfig& config, std::uint64_t seed);

  [[nodiscard]] const Net3DConfig&    config() const { return config_; }
  [[nodiscard]] ad::ParamStore&       params() { return params_; }
  [[nodiscard]] const ad::ParamStore& params() const { return params_; }

  //! d0_uv = U_init(gamma(d_uv)) for every directed pair.
  ad::Var     init_edges(ad::Tape& tape, const PointCloudBatch& batch);
  //! Every node starts from the shared learned vector.
  ad::Var     init_nodes(ad::Tape& tape, const PointCloudBatch& batch);
  LayerOutput layer(ad::Tape& tape, const PointCloudBatch& batch, std::size_t index, const ad::Var& h,
                    const ad::Var& d, const nn::Mode& mode);
  //! num_graphs x d_z.
  ad::Var forward(ad::Tape& tape, const PointCloudBatch& batch, const nn::Mode& mode);

  //! Eval-mode z^b of one point cloud (1 x d_z).
  Tensor encode(const Tensor& coords);

 private:
  Net3DConfig    config_;
  ad::ParamStore params_;
};

}  // namespace infomax3d
