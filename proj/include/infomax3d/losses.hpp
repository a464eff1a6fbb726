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

// Contrastive objectives between 2D embeddings Za and 3D embeddings Zb, and
// the pairwise distance head. Multi-conformer batches hold the c vectors of
// molecule i in rows i*c .. i*c + c - 1.

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "infomax3d/autodiff.hpp"
#include "infomax3d/conformer.hpp"
#include "infomax3d/nn.hpp"

namespace infomax3d {

enum class LossKind { kNtXentEq1, kMulti3dEq2, kMulti2dSimAll, kMulti2dSimMax, kDistanceMse };

std::string_view to_string(LossKind k);
//! Accepts "ntxent_eq1", "multi3d_eq2", "multi2d_simall", "multi2d_simmax", "distance_mse".
LossKind parse_loss_kind(std::string_view name);

struct LossConfig {
  LossKind kind = LossKind::kNtXentEq1;
  double   tau  = 0.1;
  int      c    = 1;
  //! Adds the positive term to the denominator (standard NT-Xent) for ablation.
  bool include_positive = false;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

//! a.b / (|a| |b|); throws std::invalid_argument for a zero vector.
double cosine_sim(std::span<const double> a, std::span<const double> b);

//! Cosine similarity of every row of a against every row of b.
ad::Var cosine_matrix(const ad::Var& a, const ad::Var& b);

//! -(1/N) sum_i log( exp(s_ii / tau) / sum_{k != i} exp(s_ik / tau) ).
ad::Var ntxent_eq1(const ad::Var& za, const ad::Var& zb, double tau, bool include_positive = false);

//! Za is N x d, Zb is (N c) x d. Positives are the c conformers of molecule i.
ad::Var multi3d_eq2(const ad::Var& za, const ad::Var& zb, std::size_t c, double tau, bool include_positive = false);

//! Set similarities between sets of c rows: sum over all pairs, or for every
//! vector of B the best-matching vector of A, summed.
double sim_all(const Tensor& set_a, const Tensor& set_b);
double sim_max(const Tensor& set_a, const Tensor& set_b);

//! N x N matrix of set similarities between the groups of c rows.
ad::Var set_similarity_matrix(const ad::Var& za, const ad::Var& zb, std::size_t c, LossKind kind);

//! The ntxent_eq1 form with the set similarity in place of the cosine similarity.
ad::Var multi2d_loss(LossKind kind, const ad::Var& za, const ad::Var& zb, std::size_t c, double tau,
                     bool include_positive = false);

//! Dispatches on config.kind for the contrastive kinds.
ad::Var contrastive_loss(const LossConfig& config, const ad::Var& za, const ad::Var& zb);

//! Predicts dist_uv = softplus(U(h_v | h_u) + U(h_u | h_v)) with U a two-layer
//! MLP (2 d_h -> d_h -> 1). Parameters live under "dist.".
class DistanceHead {
 public:
  DistanceHead(std::size_t d_h, std::uint64_t seed);

  [[nodiscard]] ad::ParamStore&       params() { return params_; }
  [[nodiscard]] const ad::ParamStore& params() const { return params_; }
  [[nodiscard]] std::size_t           d_h() const { return d_h_; }

  //! One prediction per (u, v) pair of node rows; P x 1.
  ad::Var forward(ad::Tape& tape, const ad::Var& nodes, std::span<const std::pair<std::size_t, std::size_t>> pairs);

 private:
  std::size_t    d_h_;
  ad::ParamStore params_;
};

//! Every pair u < v of one molecule, in row-major order.
std::vector<std::pair<std::size_t, std::size_t>> upper_pairs(std::size_t n, std::size_t offset = 0);

//! Targets d_uv for upper_pairs(n) as a P x 1 column.
Tensor pair_distances(const DistanceMatrix& d);

//! Mean over pairs of (pred - target)^2; throws when the pair counts differ.
ad::Var distance_mse(const ad::Var& pred, const Tensor& target);

}  // namespace infomax3d
