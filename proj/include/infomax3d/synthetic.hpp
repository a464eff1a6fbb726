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
#include <span>

#include "infomax3d/molgraph.hpp"

namespace infomax3d {

//! Generator for tree-shaped molecules with z-matrix geometry. The lowest
//! energy conformer is fully determined by the graph: bond lengths follow bond
//! order, bond angles the central element and torsions the outer element.
//! Higher conformers perturb every torsion and carry a torsional strain energy.
struct SyntheticOptions {
  std::size_t   num_molecules   = 64;
  std::size_t   min_atoms       = 6;
  std::size_t   max_atoms       = 12;
  std::size_t   num_conformers  = 3;
  double        torsion_noise   = 0.6;  // radians, std of the perturbation
  double        double_bond_p   = 0.15;
  std::uint64_t seed            = 0;
  std::string   id_prefix       = "syn";
};

//! Targets: "mean_dist" is the mean pairwise distance of the lowest-energy
//! conformer; "linear" is a fixed linear function of element counts.
inline constexpr const char* kMeanDistTarget = "mean_dist";
inline constexpr const char* kLinearTarget   = "linear";

Dataset make_synthetic_dataset(const SyntheticOptions& options);

//! Coordinates of a tree-shaped molecule of C, N, O and S. The tree is rooted
//! at its centre and siblings are ordered by their canonical subtree, so the
//! geometry depends on the graph only up to relabelling. `torsion_offset`
//! (radians, one per atom, or empty) perturbs the torsion of each atom's
//! bond to its parent.
Tensor synthetic_geometry(const MolecularGraph& graph, std::span<const double> torsion_offset = {});

}  // namespace infomax3d
