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

#include "infomax3d/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace infomax3d {

namespace {

void require_batch(std::size_t n, const char* op) {
  if (n < 2) {
    throw std::invalid_argument(std::string(op) + ": need a batch of at least 2 molecules for negatives, got " +
                                std::to_string(n));
  }
}

// Masks over an N x (N c) similarity matrix: positives are the c columns of
// the same molecule; negatives the rest (or every column).
std::pair<Tensor, Tensor> contrast_masks(std::size_t n, std::size_t c, bool include_positive) {
  Tensor pos(n, n * c);
  Tensor neg(n, n * c, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      pos(i, i * c + j) = 1.0;
      if (!include_positive) neg(i, i * c + j) = 0.0;
    }
  }
  return {std::move(pos), std::move(neg)};
}

ad::Var contrast(const ad::Var& scaled, std::size_t n, std::size_t c, bool include_positive) {
  const auto [pos, neg] = contrast_masks(n, c, include_positive);
  const ad::Var lse_pos = ad::masked_logsumexp_rows(scaled, pos);
  const ad::Var lse_neg = ad::masked_logsumexp_rows(scaled, neg);
  return ad::mean_all(ad::sub(lse_neg, lse_pos));
}

void require_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("contrastive loss: tau must be positive, got " + std::to_string(tau));
  }
}

// N c x N indicator of the group of each row.
Tensor group_indicator(std::size_t n, std::size_t c) {
  Tensor p(n * c, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) p(i * c + j, i) = 1.0;
  }
  return p;
}

}  // namespace

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::kNtXentEq1: return "ntxent_eq1";
    case LossKind::kMulti3dEq2: return "multi3d_eq2";
    case LossKind::kMulti2dSimAll: return "multi2d_simall";
    case LossKind::kMulti2dSimMax: return "multi2d_simmax";
    case LossKind::kDistanceMse: return "distance_mse";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  for (LossKind k : {LossKind::kNtXentEq1, LossKind::kMulti3dEq2, LossKind::kMulti2dSimAll, LossKind::kMulti2dSimMax,
                     LossKind::kDistanceMse}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown loss '" + std::string(name) +
                              "' (use ntxent_eq1, multi3d_eq2, multi2d_simall, multi2d_simmax or distance_mse)");
}

void LossConfig::validate() const {
  require_tau(tau);
  if (c < 1) {
    throw std::invalid_argument("loss config: c must be >= 1, got " + std::to_string(c));
  }
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_sim: length mismatch " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("cosine_sim: zero vector, cosine similarity is undefined");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

ad::Var cosine_matrix(const ad::Var& a, const ad::Var& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("cosine_matrix: embedding widths differ (" + a.value().shape_str() + " vs " +
                                b.value().shape_str() + ")");
  }
  return ad::matmul(ad::normalize_rows(a), ad::transpose(ad::normalize_rows(b)));
}

ad::Var ntxent_eq1(const ad::Var& za, const ad::Var& zb, double tau, bool include_positive) {
  require_tau(tau);
  require_batch(za.rows(), "ntxent_eq1");
  if (zb.rows() != za.rows()) {
    throw std::invalid_argument("ntxent_eq1: Za " + za.value().shape_str() + " and Zb " + zb.value().shape_str() +
                                " differ in batch size");
  }
  return contrast(ad::scale(cosine_matrix(za, zb), 1.0 / tau), za.rows(), 1, include_positive);
}

ad::Var multi3d_eq2(const ad::Var& za, const ad::Var& zb, std::size_t c, double tau, bool include_positive) {
  require_tau(tau);
  require_batch(za.rows(), "multi3d_eq2");
  if (c < 1 || zb.rows() != za.rows() * c) {
    throw std::invalid_argument("multi3d_eq2: Zb " + zb.value().shape_str() + " does not hold c=" + std::to_string(c) +
                                " rows per molecule of Za " + za.value().shape_str());
  }
  return contrast(ad::scale(cosine_matrix(za, zb), 1.0 / tau), za.rows(), c, include_positive);
}

double sim_all(const Tensor& set_a, const Tensor& set_b) {
  double s = 0.0;
  for (std::size_t j = 0; j < set_a.rows(); ++j) {
    for (std::size_t k = 0; k < set_b.rows(); ++k) s += cosine_sim(set_a.row_span(j), set_b.row_span(k));
  }
  return s;
}

double sim_max(const Tensor& set_a, const Tensor& set_b) {
  if (set_a.rows() == 0) {
    throw std::invalid_argument("sim_max: empty set");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < set_b.rows(); ++k) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < set_a.rows(); ++j) best = std::max(best, cosine_sim(set_a.row_span(j), set_b.row_span(k)));
    s += best;
  }
  return s;
}

ad::Var set_similarity_matrix(const ad::Var& za, const ad::Var& zb, std::size_t c, LossKind kind) {
  if (c < 1 || za.rows() % c != 0 || za.rows() != zb.rows()) {
    throw std::invalid_argument("set similarity: Za " + za.value().shape_str() + " and Zb " + zb.value().shape_str() +
                                " must both hold c=" + std::to_string(c) + " rows per molecule");
  }
  const std::size_t n   = za.rows() / c;
  ad::Tape&         t   = *za.tape();
  const ad::Var     cos = cosine_matrix(za, zb);  // Nc x Nc
  const ad::Var     p   = t.constant(group_indicator(n, c));
  if (kind == LossKind::kMulti2dSimAll) {
    return ad::matmul(ad::matmul(ad::transpose(p), cos), p);
  }
  if (kind == LossKind::kMulti2dSimMax) {
    std::vector<std::size_t> bounds(n + 1);
    for (std::size_t i = 0; i <= n; ++i) bounds[i] = i * c;
    const ad::Var best = ad::segment_max(cos, kernels::Segments::contiguous(bounds));  // N x Nc
    return ad::matmul(best, p);
  }
  throw std::invalid_argument("set similarity: loss kind '" + std::string(to_string(kind)) + "' is not a set kind");
}

ad::Var multi2d_loss(LossKind kind, const ad::Var& za, const ad::Var& zb, std::size_t c, double tau,
                     bool include_positive) {
  require_tau(tau);
  const ad::Var sim = set_similarity_matrix(za, zb, c, kind);
  require_batch(sim.rows(), "multi2d_loss");
  return contrast(ad::scale(sim, 1.0 / tau), sim.rows(), 1, include_positive);
}

ad::Var contrastive_loss(const LossConfig& config, const ad::Var& za, const ad::Var& zb) {
  config.validate();
  const auto c = static_cast<std::size_t>(config.c);
  switch (config.kind) {
    case LossKind::kNtXentEq1: return ntxent_eq1(za, zb, config.tau, config.include_positive);
    case LossKind::kMulti3dEq2: return multi3d_eq2(za, zb, c, config.tau, config.include_positive);
    case LossKind::kMulti2dSimAll:
    case LossKind::kMulti2dSimMax: return multi2d_loss(config.kind, za, zb, c, config.tau, config.include_positive);
    case LossKind::kDistanceMse: break;
  }
  throw std::invalid_argument("contrastive_loss: distance_mse is not a contrastive loss");
}

DistanceHead::DistanceHead(std::size_t d_h, std::uint64_t seed) : d_h_(d_h) {
  params_.init_seed = seed;
  Rng rng(seed);
  nn::add_mlp(params_, "dist.u", {2 * d_h, d_h, 1}, rng);
}

ad::Var DistanceHead::forward(ad::Tape& tape, const ad::Var& nodes,
                              std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  if (nodes.cols() != d_h_) {
    throw std::invalid_argument("distance head: node width " + std::to_string(nodes.cols()) + " != d_h " +
                                std::to_string(d_h_));
  }
  std::vector<std::size_t> us, vs;
  us.reserve(pairs.size());
  vs.reserve(pairs.size());
  for (const auto& [u, v] : pairs) {
    us.push_back(u);
    vs.push_back(v);
  }
  const ad::Var hu   = ad::gather_rows(nodes, us);
  const ad::Var hv   = ad::gather_rows(nodes, vs);
  const ad::Var vu[] = {hv, hu};
  const ad::Var uv[] = {hu, hv};
  const ad::Var a    = nn::mlp(tape, params_, "dist.u", 2, ad::concat_cols(vu));
  const ad::Var b    = nn::mlp(tape, params_, "dist.u", 2, ad::concat_cols(uv));
  return ad::softplus(ad::add(a, b));
}

std::vector<std::pair<std::size_t, std::size_t>> upper_pairs(std::size_t n, std::size_t offset) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(n * (n - (n > 0 ? 1 : 0)) / 2);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) out.emplace_back(offset + u, offset + v);
  }
  return out;
}

Tensor pair_distances(const DistanceMatrix& d) {
  const auto pairs = upper_pairs(d.size());
  Tensor     out(pairs.size(), 1);
  for (std::size_t p = 0; p < pairs.size(); ++p) out(p, 0) = d(pairs[p].first, pairs[p].second);
  return out;
}

ad::Var distance_mse(const ad::Var& pred, const Tensor& target) {
  if (pred.cols() != 1 || target.cols() != 1 || pred.rows() != target.rows()) {
    throw std::invalid_argument("distance_mse: prediction " + pred.value().shape_str() + " and target " +
                                target.shape_str() + " cover different pair sets");
  }
  if (target.rows() == 0) {
    throw std::invalid_argument("distance_mse: no atom pairs");
  }
  return ad::mean_all(ad::square(ad::sub(pred, pred.tape()->constant(target))));
}

}  // namespace infomax3d
