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

#include "infomax3d/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>

namespace infomax3d {

namespace {

using Vec3 = std::array<double, 3>;

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(const Vec3& a) {
  const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  return {a[0] / n, a[1] / n, a[2] / n};
}

// Places d so that |cd| = r, angle(b, c, d) = theta and dihedral(a, b, c, d) = phi.
Vec3 place(const Vec3& a, const Vec3& b, const Vec3& c, double r, double theta, double phi) {
  const Vec3   bc = normalized(sub(c, b));
  const Vec3   n  = normalized(cross(sub(b, a), bc));
  const Vec3   m  = cross(n, bc);
  const double x  = -r * std::cos(theta);
  const double y  = r * std::sin(theta) * std::cos(phi);
  const double z  = r * std::sin(theta) * std::sin(phi);
  return {c[0] + x * bc[0] + y * m[0] + z * n[0], c[1] + x * bc[1] + y * m[1] + z * n[1],
          c[2] + x * bc[2] + y * m[2] + z * n[2]};
}

struct ElementGeometry {
  int    z;
  double angle_deg;    // bond angle when this atom is the vertex
  double torsion_deg;  // torsion of the bond ending at this atom
  double linear_coef;
};

// Angles below 180 keep the placement frames well defined.
constexpr std::array<ElementGeometry, 4> kElements = {{
    {6, 111.0, 180.0, 1.0},  // C
    {7, 119.0, 65.0, 2.0},   // N
    {8, 104.0, -70.0, 3.0},  // O
    {16, 96.0, 0.0, 4.0},    // S
}};

const ElementGeometry& geometry_of(int z) {
  for (const auto& e : kElements) {
    if (e.z == z) return e;
  }
  throw std::logic_error("synthetic: no geometry for element");
}

double bond_length(BondOrder order) {
  switch (order) {
    case BondOrder::kSingle: return 1.52;
    case BondOrder::kDouble: return 1.33;
    case BondOrder::kTriple: return 1.20;
    case BondOrder::kAromatic: return 1.40;
  }
  return 1.5;
}

double deg(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

namespace {

// Canonical string of the subtree hanging from v (reached from `from`).
std::string subtree_key(const std::vector<std::vector<std::pair<std::size_t, BondOrder>>>& adj,
                        const MolecularGraph& g, std::size_t v, std::size_t from, BondOrder via) {
  std::vector<std::string> children;
  for (const auto& [w, order] : adj[v]) {
    if (w != from) children.push_back(subtree_key(adj, g, w, v, order));
  }
  std::sort(children.begin(), children.end());
  std::string key = std::to_string(g.atoms[v].atomic_number) + ":" + std::to_string(static_cast<int>(via)) + "(";
  for (const auto& c : children) key += c;
  return key + ")";
}

}  // namespace

Tensor synthetic_geometry(const MolecularGraph& g, std::span<const double> torsion_offset) {
  const std::size_t n = g.num_atoms();
  if (n == 0) throw std::invalid_argument("synthetic_geometry: empty graph");
  if (g.bonds.size() + 1 != n) throw std::invalid_argument("synthetic_geometry: graph is not a tree");
  if (!torsion_offset.empty() && torsion_offset.size() != n) {
    throw std::invalid_argument("synthetic_geometry: one torsion offset per atom expected");
  }
  std::vector<std::vector<std::pair<std::size_t, BondOrder>>> adj(n);
  for (const auto& b : g.bonds) {
    adj[b.u].emplace_back(b.v, b.order);
    adj[b.v].emplace_back(b.u, b.order);
  }

  // Tree centre by repeated leaf stripping.
  std::vector<std::size_t> degree(n);
  std::vector<std::size_t> layer;
  for (std::size_t v = 0; v < n; ++v) {
    degree[v] = adj[v].size();
    if (degree[v] <= 1) layer.push_back(v);
  }
  std::size_t remaining = n;
  while (remaining > 2) {
    remaining -= layer.size();
    std::vector<std::size_t> next;
    for (std::size_t v : layer) {
      for (const auto& [w, _] : adj[v]) {
        if (--degree[w] == 1) next.push_back(w);
      }
    }
    layer = std::move(next);
  }
  if (layer.empty()) throw std::invalid_argument("synthetic_geometry: graph is not connected");
  std::size_t root = layer.front();
  if (layer.size() == 2) {
    const std::size_t a = layer[0], b = layer[1];
    if (subtree_key(adj, g, b, a, BondOrder::kSingle) < subtree_key(adj, g, a, b, BondOrder::kSingle)) root = b;
  }

  // Breadth-first order with children ranked by their canonical subtree.
  const std::size_t        none = n;
  std::vector<std::size_t> parent(n, none), rank(n, 0), order{root};
  std::vector<BondOrder>   parent_bond(n, BondOrder::kSingle);
  std::vector<bool>        seen(n, false);
  seen[root] = true;
  for (std::size_t head = 0; head < order.size(); ++head) {
    const std::size_t                                 v = order[head];
    std::vector<std::tuple<std::string, std::size_t, BondOrder>> kids;
    for (const auto& [w, bo] : adj[v]) {
      if (!seen[w]) kids.emplace_back(subtree_key(adj, g, w, v, bo), w, bo);
    }
    std::sort(kids.begin(), kids.end());
    for (std::size_t r = 0; r < kids.size(); ++r) {
      const auto& [_, w, bo] = kids[r];
      seen[w]        = true;
      parent[w]      = v;
      rank[w]        = r;
      parent_bond[w] = bo;
      order.push_back(w);
    }
  }
  if (order.size() != n) throw std::invalid_argument("synthetic_geometry: graph is not connected");

  // Two virtual ancestors of the root fix the global frame.
  std::vector<Vec3> pos(n + 2);
  pos[root]  = {0.0, 0.0, 0.0};
  pos[n]     = {-1.0, 0.0, 0.0};
  pos[n + 1] = {-1.0, 1.0, 0.0};
  auto up    = [&](std::size_t i) { return i == root ? n : (i == n ? n + 1 : parent[i]); };
  for (std::size_t k = 1; k < n; ++k) {
    const std::size_t i     = order[k];
    const std::size_t p     = parent[i];
    const double      theta = deg(geometry_of(g.atoms[p].atomic_number).angle_deg);
    const double      phi   = deg(geometry_of(g.atoms[i].atomic_number).torsion_deg) +
                         deg(120.0) * static_cast<double>(rank[i]) + (torsion_offset.empty() ? 0.0 : torsion_offset[i]);
    pos[i] = place(pos[up(up(p))], pos[up(p)], pos[p], bond_length(parent_bond[i]), theta, phi);
  }
  Tensor coords(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) coords(i, c) = pos[i][c];
  }
  return coords;
}

Dataset make_synthetic_dataset(const SyntheticOptions& options) {
  if (options.min_atoms < 2 || options.max_atoms < options.min_atoms) {
    throw std::invalid_argument("synthetic: need 2 <= min_atoms <= max_atoms");
  }
  if (options.num_conformers < 1) {
    throw std::invalid_argument("synthetic: need at least one conformer");
  }
  std::mt19937_64                        rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double>       noise(0.0, options.torsion_noise);
  const std::array<double, 4>            element_p = {0.55, 0.2, 0.17, 0.08};

  Dataset ds;
  ds.target_names = {kMeanDistTarget, kLinearTarget};
  for (std::size_t m = 0; m < options.num_molecules; ++m) {
    MolecularGraph g;
    g.id = options.id_prefix + std::to_string(m);
    std::uniform_int_distribution<std::size_t> size_pick(options.min_atoms, options.max_atoms);
    const std::size_t                          n = size_pick(rng);

    // Tree: each atom attaches to an earlier atom with free valence, biased
    // towards the previous atom so chains dominate.
    std::vector<std::size_t> parent(n, 0);
    std::vector<int>         valence(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      double u = unit(rng);
      int    e = 0;
      while (e < 3 && u > element_p[static_cast<std::size_t>(e)]) u -= element_p[static_cast<std::size_t>(e++)];
      g.atoms.push_back(Atom{kElements[static_cast<std::size_t>(e)].z, 0, 0});
      valence[i] = kElements[static_cast<std::size_t>(e)].z == 6 ? 4 : (kElements[static_cast<std::size_t>(e)].z == 7 ? 3 : 2);
      if (i == 0) continue;
      std::size_t p = i - 1;
      if (unit(rng) < 0.3 || valence[p] <= 0) {
        std::vector<std::size_t> open;
        for (std::size_t j = 0; j < i; ++j) {
          if (valence[j] > 0) open.push_back(j);
        }
        if (open.empty()) {
          // Every earlier atom is saturated; let the new atom be carbon on the last one.
          g.atoms[i].atomic_number = 6;
          valence[i]               = 4;
          p                        = i - 1;
        } else {
          p = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
        }
      }
      BondOrder order = BondOrder::kSingle;
      if (valence[p] >= 2 && valence[i] >= 2 && unit(rng) < options.double_bond_p) order = BondOrder::kDouble;
      const int used = order == BondOrder::kDouble ? 2 : 1;
      valence[p] -= used;
      valence[i] -= used;
      parent[i] = p;
      g.bonds.push_back(Bond{p, i, order});
    }
    g.recompute_degrees();

    auto build = [&](const std::vector<double>& torsion_offset) { return synthetic_geometry(g, torsion_offset); };

    std::vector<Conformer> confs;
    confs.push_back(Conformer{build(std::vector<double>(n, 0.0)), 0.0, {}});
    for (std::size_t j = 1; j < options.num_conformers; ++j) {
      std::vector<double> offset(n, 0.0);
      double              strain = 0.0;
      for (std::size_t i = 1; i < n; ++i) {
        offset[i] = noise(rng);
        strain += 1.0 - std::cos(offset[i]);
      }
      // Strictly positive so the unperturbed conformer stays first.
      confs.push_back(Conformer{build(offset), 0.05 + strain, {}});
    }
    std::vector<double> energies;
    for (const auto& c : confs) energies.push_back(*c.energy);
    const auto weights = boltzmann_weights(energies);
    for (std::size_t j = 0; j < confs.size(); ++j) confs[j].weight = weights[j];

    const Tensor d    = pairwise_distances(confs.front().coords).values;
    double       dsum = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = u + 1; v < n; ++v) dsum += d(u, v);
    }
    const double mean_dist = dsum / (static_cast<double>(n * (n - 1)) / 2.0);
    double       linear    = 0.0;
    for (const auto& a : g.atoms) linear += geometry_of(a.atomic_number).linear_coef;
    linear += 0.5 * static_cast<double>(std::count_if(g.bonds.begin(), g.bonds.end(), [](const Bond& b) {
                return b.order == BondOrder::kDouble;
              }));

    g.conformers = ConformerSet(std::move(confs));
    g.targets    = {mean_dist, linear};
    g.validate();
    ds.molecules.push_back(std::move(g));
  }
  ds.target_stats = compute_target_stats(ds);
  return ds;
}

}  // namespace infomax3d
