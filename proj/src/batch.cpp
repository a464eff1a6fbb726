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

#include "infomax3d/batch.hpp"

#include <stdexcept>
#include <string>

namespace infomax3d {

GraphBatch make_graph_batch(std::span<const MolecularGraph* const> graphs) {
  GraphBatch b;
  b.num_graphs = graphs.size();
  b.node_offset.push_back(0);
  std::size_t num_edges = 0;
  for (const MolecularGraph* g : graphs) {
    if (!g->featurized()) {
      throw std::invalid_argument("graph '" + g->id + "' is not featurized");
    }
    b.node_offset.push_back(b.node_offset.back() + g->num_atoms());
    num_edges += 2 * g->bonds.size();
  }
  b.num_nodes     = b.node_offset.back();
  b.node_features = Tensor(b.num_nodes, kAtomFeatureDim);
  b.edge_features = Tensor(num_edges, kBondFeatureDim);
  b.degree.assign(b.num_nodes, 0.0);
  std::size_t e = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const MolecularGraph& g   = *graphs[gi];
    const std::size_t     off = b.node_offset[gi];
    for (std::size_t i = 0; i < g.num_atoms(); ++i) {
      std::copy_n(g.atom_features.row_span(i).begin(), kAtomFeatureDim, b.node_features.row_span(off + i).begin());
      b.degree[off + i] = static_cast<double>(g.atoms[i].degree);
    }
    for (std::size_t k = 0; k < g.bonds.size(); ++k) {
      const auto& bond = g.bonds[k];
      for (auto [src, dst] : {std::pair{bond.u, bond.v}, std::pair{bond.v, bond.u}}) {
        b.edge_src.push_back(off + src);
        b.edge_dst.push_back(off + dst);
        std::copy_n(g.bond_features.row_span(k).begin(), kBondFeatureDim, b.edge_features.row_span(e).begin());
        ++e;
      }
    }
  }
  b.incoming    = kernels::Segments::from_keys(b.edge_dst, b.num_nodes);
  b.graph_nodes = kernels::Segments::contiguous(b.node_offset);
  return b;
}

PointCloudBatch make_point_cloud_batch(std::span<const Tensor* const> coords, int frequencies) {
  PointCloudBatch b;
  b.num_graphs = coords.size();
  b.node_offset.push_back(0);
  std::size_t num_edges = 0;
  for (const Tensor* x : coords) {
    const std::size_t n = x->rows();
    if (n > kMaxPointCloudAtoms) {
      throw std::invalid_argument("point cloud has " + std::to_string(n) + " atoms; the 3D network supports at most " +
                                  std::to_string(kMaxPointCloudAtoms));
    }
    b.node_offset.push_back(b.node_offset.back() + n);
    num_edges += n * (n - 1);
  }
  b.num_nodes                = b.node_offset.back();
  const auto width           = static_cast<std::size_t>(2 * frequencies + 1);
  b.edge_encoding            = Tensor(num_edges, width);
  std::size_t e              = 0;
  for (std::size_t gi = 0; gi < coords.size(); ++gi) {
    const Tensor      d   = pairwise_distances(*coords[gi]).values;
    const std::size_t n   = d.rows();
    const std::size_t off = b.node_offset[gi];
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = 0; v < n; ++v) {
        if (u == v) continue;
        b.edge_dst.push_back(off + u);
        b.edge_src.push_back(off + v);
        gamma_encode_into(d(u, v), frequencies, b.edge_encoding.row_span(e));
        ++e;
      }
    }
  }
  b.incoming    = kernels::Segments::from_keys(b.edge_dst, b.num_nodes);
  b.graph_nodes = kernels::Segments::contiguous(b.node_offset);
  return b;
}

}  // namespace infomax3d
