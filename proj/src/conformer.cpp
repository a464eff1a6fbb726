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

#include "infomax3d/conformer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "infomax3d/kernels.hpp"

namespace infomax3d {

ConformerSet::ConformerSet(std::vector<Conformer> conformers) : conformers_(std::move(conformers)) {
  if (has_energies()) {
    std::stable_sort(conformers_.begin(), conformers_.end(),
                     [](const Conformer& a, const Conformer& b) { return *a.energy < *b.energy; });
  }
}

std::size_t ConformerSet::num_atoms() const { return conformers_.empty() ? 0 : conformers_.front().num_atoms(); }

bool ConformerSet::has_energies() const {
  return !conformers_.empty() &&
         std::all_of(conformers_.begin(), conformers_.end(), [](const Conformer& c) { return c.energy.has_value(); });
}

bool ConformerSet::has_weights() const {
  return !conformers_.empty() &&
         std::all_of(conformers_.begin(), conformers_.end(), [](const Conformer& c) { return c.weight.has_value(); });
}

void ConformerSet::validate() const {
  if (conformers_.empty()) {
    throw std::invalid_argument("conformer set is empty");
  }
  const std::size_t n = num_atoms();
  for (std::size_t j = 0; j < conformers_.size(); ++j) {
    const auto& c = conformers_[j];
    if (c.coords.cols() != 3 || c.num_atoms() != n) {
      throw std::invalid_argument("conformer " + std::to_string(j) + " has shape " + c.coords.shape_str() +
                                  ", expected [" + std::to_string(n) + "x3]");
    }
    if (!c.coords.all_finite()) {
      throw std::invalid_argument("conformer " + std::to_string(j) + " has non-finite coordinates");
    }
    if (c.weight && (*c.weight < 0.0 || *c.weight > 1.0)) {
      throw std::invalid_argument("conformer " + std::to_string(j) + " weight outside [0, 1]");
    }
  }
  if (has_weights()) {
    double s = 0.0;
    for (const auto& c : conformers_) s += *c.weight;
    if (std::abs(s - 1.0) > 1e-6) {
      throw std::invalid_argument("conformer weights sum to " + std::to_string(s) + ", expected 1");
    }
  }
}

DistanceMatrix pairwise_distances(const Tensor& coords) {
  if (coords.rows() < 1) {
    throw std::invalid_argument("pairwise_distances: need at least one atom");
  }
  if (!coords.all_finite()) {
    throw std::invalid_argument("pairwise_distances: non-finite coordinates");
  }
  return DistanceMatrix{kernels::pairwise_distances(coords)};
}

DistanceMatrix pairwise_distances(const Conformer& conf) { return pairwise_distances(conf.coords); }

void gamma_encode_into(double d, int frequencies, std::span<double> out) {
  if (frequencies < 0) {
    throw std::invalid_argument("gamma_encode: negative frequency count");
  }
  if (out.size() != static_cast<std::size_t>(2 * frequencies + 1)) {
    throw std::invalid_argument("gamma_encode: output span has wrong length");
  }
  out[0]       = d;
  double scale = 1.0;
  for (int k = 0; k < frequencies; ++k) {
    const double x = d / scale;
    out[1 + 2 * k] = std::sin(x);
    out[2 + 2 * k] = std::cos(x);
    scale *= 2.0;
  }
}

std::vector<double> gamma_encode(double d, int frequencies) {
  if (frequencies < 0) {
    throw std::invalid_argument("gamma_encode: negative frequency count");
  }
  std::vector<double> out(static_cast<std::size_t>(2 * frequencies + 1));
  gamma_encode_into(d, frequencies, out);
  return out;
}

std::vector<Conformer> select_conformers(const ConformerSet& set, int c) {
  if (c < 1) {
    throw std::invalid_argument("select_conformers: c must be >= 1, got " + std::to_string(c));
  }
  if (set.size() == 0) {
    throw std::invalid_argument("select_conformers: empty conformer set");
  }
  const auto             count = static_cast<std::size_t>(c);
  std::vector<Conformer> out;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    out.push_back(j < set.size() ? set[j] : set.lowest_energy());
  }
  return out;
}

std::vector<double> boltzmann_weights(std::span<const double> energies, double temperature_k) {
  if (!(temperature_k > 0.0)) {
    throw std::invalid_argument("boltzmann_weights: temperature must be positive");
  }
  if (energies.empty()) {
    return {};
  }
  const double        emin = *std::min_element(energies.begin(), energies.end());
  const double        kt   = kBoltzmannKcalPerMolK * temperature_k;
  std::vector<double> p(energies.size());
  double              z = 0.0;
  for (std::size_t j = 0; j < energies.size(); ++j) {
    if (!std::isfinite(energies[j])) {
      throw std::invalid_argument("boltzmann_weights: non-finite energy");
    }
    p[j] = std::exp(-(energies[j] - emin) / kt);
    z += p[j];
  }
  for (auto& v : p) v /= z;
  return p;
}

const Conformer& sample_conformer(const ConformerSet& set, ConformerSampling strategy, std::mt19937_64& rng) {
  if (set.size() == 0) {
    throw std::invalid_argument("sample_conformer: empty conformer set");
  }
  if (strategy == ConformerSampling::kBoltzmann && !set.has_weights() && !set.has_energies()) {
    throw std::invalid_argument("sample_conformer: Boltzmann sampling needs weights or energies on every conformer");
  }
  if (set.size() == 1) {
    return set[0];
  }
  if (strategy == ConformerSampling::kUniform) {
    std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
    return set[pick(rng)];
  }
  std::vector<double> w;
  if (set.has_weights()) {
    for (const auto& c : set.conformers()) w.push_back(*c.weight);
  } else {
    std::vector<double> e;
    for (const auto& c : set.conformers()) e.push_back(*c.energy);
    w = boltzmann_weights(e);
  }
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return set[pick(rng)];
}

}  // namespace infomax3d
