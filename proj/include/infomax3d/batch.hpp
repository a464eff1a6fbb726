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

// Disjoint-union batches. Node i of graph g sits at row node_offset[g] + i.
// Every directed edge carries a message from edge_src to edge_dst.

#include <span>
#include <vector>

#include "infomax3d/kernels.hpp"
#include "infomax3d/molgraph.hpp"

namespace infomax3d {

struct GraphBatch {
  std::size_t              num_graphs = 0;
  std::size_t              num_nodes  = 0;
  Tensor                   node_features;  // num_nodes x kAtomFeatureDim
  Tensor                   edge_features;  // 2|E| x kBondFeatureDim, both directions of each bond
  std::vector<std::size_t> edge_src;
  std::vector<std::size_t> edge_dst;
  std::vector<std::size_t> node_offset;  // num_graphs + 1 entries
  std::vector<double>      degree;       // per node
  kernels::Segments        incoming;     // per node: ids of edges ending there
  kernels::Segments        graph_nodes;  // per graph: its node rows
};

//! Throws std::invalid_argument when a graph is not featurized.
GraphBatch make_graph_batch(std::span<const MolecularGraph* const> graphs);

//! Complete directed graphs over point clouds with gamma-encoded distances.
struct PointCloudBatch {
  std::size_t              num_graphs = 0;
  std::size_t              num_nodes  = 0;
  Tensor                   edge_encoding;  // (sum n(n-1)) x (2F + 1)
  std::vector<std::size_t> edge_src;
  std::vector<std::size_t> edge_dst;
  std::vector<std::size_t> node_offset;
  kernels::Segments        incoming;
  kernels::Segments        graph_nodes;
};

inline constexpr std::size_t kMaxPointCloudAtoms = 128;

//! Throws std::invalid_argument for clouds with more than kMaxPointCloudAtoms atoms.
PointCloudBatch make_point_cloud_batch(std::span<const Tensor* const> coords, int frequencies);

}  // namespace infomax3d
