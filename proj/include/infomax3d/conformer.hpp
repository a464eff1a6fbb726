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

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "infomax3d/tensor.hpp"

namespace infomax3d {

//! Boltzmann constant in kcal/(mol K).
inline constexpr double kBoltzmannKcalPerMolK = 0.0019872041;
inline constexpr double kRoomTemperatureK     = 298.15;
//! Default number of frequencies in the distance encoding.
inline constexpr int kDefaultFrequencies = 4;

//! One 3D arrangement of a molecule: n x 3 coordinates in Angstrom.
struct Conformer {
  Tensor                coords;
  std::optional<double> energy;  // kcal/mol
  std::optional<double> weight;  // Boltzmann weight in [0, 1]

  [[nodiscard]] std::size_t num_atoms() const { return coords.rows(); }
  bool                      operator==(const Conformer&) const = default;
};

//! Non-empty list of conformers of one molecule. When every conformer carries
//! an energy the list is kept sorted ascending by energy (stable, so ties keep
//! file order); otherwise file order is taken to be the energy order.
class ConformerSet {
 public:
  ConformerSet() = default;
  explicit ConformerSet(std::vector<Conformer> conformers);

  [[nodiscard]] std::size_t                   size() const { return conformers_.size(); }
  [[nodiscard]] std::size_t                   num_atoms() const;
  [[nodiscard]] const Conformer&              operator[](std::size_t i) const { return conformers_[i]; }
  [[nodiscard]] const std::vector<Conformer>& conformers() const { return conformers_; }
  [[nodiscard]] const Conformer&              lowest_energy() const { return conformers_.front(); }
  [[nodiscard]] bool                          has_energies() const;
  [[nodiscard]] bool                          has_weights() const;

  //! Throws std::invalid_argument describing the first broken invariant.
  void validate() const;

  bool operator==(const ConformerSet&) const = default;

 private:
  std::vector<Conformer> conformers_;
};

//! Symmetric n x n matrix of Euclidean distances (Angstrom) with zero diagonal.
struct DistanceMatrix {
  Tensor values;

  [[nodiscard]] std::size_t size() const { return values.rows(); }
  double                    operator()(std::size_t u, std::size_t v) const { return values(u, v); }
};

DistanceMatrix pairwise_distances(const Conformer& conf);
DistanceMatrix pairwise_distances(const Tensor& coords);

//! (d, sin(d/2^0), cos(d/2^0), ..., sin(d/2^(F-1)), cos(d/2^(F-1))), length 2F + 1.
std::vector<double> gamma_encode(double d, int frequencies = kDefaultFrequencies);
//! Writes gamma_encode(d) into `out` (length 2F + 1).
void gamma_encode_into(double d, int frequencies, std::span<double> out);

//! The c lowest-energy conformers in energy order, padded with copies of the
//! lowest-energy conformer when the set has fewer than c.
std::vector<Conformer> select_conformers(const ConformerSet& set, int c);

enum class ConformerSampling { kUniform, kBoltzmann };

//! Draws one conformer: uniformly, or by Boltzmann weight (stored weights win
//! over weights computed from energies at room temperature).
const Conformer& sample_conformer(const ConformerSet& set, ConformerSampling strategy, std::mt19937_64& rng);

//! p_j = exp(-(E_j - min E) / (k_B T)), normalised.
std::vector<double> boltzmann_weights(std::span<const double> energies_kcal, double temperature_k = kRoomTemperatureK);

}  // namespace infomax3d
