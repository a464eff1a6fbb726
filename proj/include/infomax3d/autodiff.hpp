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

// Reverse-mode differentiation over rank-2 double tensors.
//
// A Tape records every op applied to its Vars. backward() walks the tape once
// in reverse and leaves d(output)/d(node) in each node that requires a
// gradient; parameter nodes additionally add their gradient into the owning
// ParamStore, so a parameter used several times accumulates additively. A
// tape can be consumed by backward() exactly once.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "infomax3d/kernels.hpp"
#include "infomax3d/tensor.hpp"

namespace infomax3d {

using Rng = std::mt19937_64;

namespace ad {

struct Parameter {
  Tensor value;
  Tensor grad;
};

//! Named learnable arrays of one network plus non-trainable buffers
//! (batch-norm running statistics). Iteration order is name order.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init);
  Tensor&    add_buffer(const std::string& name, Tensor init);

  [[nodiscard]] bool             contains(const std::string& name) const { return params_.contains(name); }
  [[nodiscard]] Parameter&       at(const std::string& name);
  [[nodiscard]] const Parameter& at(const std::string& name) const;
  [[nodiscard]] Tensor&          buffer(const std::string& name);
  [[nodiscard]] const Tensor&    buffer(const std::string& name) const;
  [[nodiscard]] bool             has_buffer(const std::string& name) const { return buffers_.contains(name); }

  [[nodiscard]] std::map<std::string, Parameter>&       params() { return params_; }
  [[nodiscard]] const std::map<std::string, Parameter>& params() const { return params_; }
  [[nodiscard]] std::map<std::string, Tensor>&          buffers() { return buffers_; }
  [[nodiscard]] const std::map<std::string, Tensor>&    buffers() const { return buffers_; }

  [[nodiscard]] std::size_t num_scalars() const;
  void                      zero_grad();

  std::uint64_t init_seed = 0;

 private:
  std::map<std::string, Parameter> params_;
  std::map<std::string, Tensor>    buffers_;
};

class Tape;

//! Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] Tape*         tape() const { return tape_; }
  [[nodiscard]] std::size_t   id() const { return id_; }
  [[nodiscard]] const Tensor& value() const;
  [[nodiscard]] const Tensor& grad() const;
  [[nodiscard]] std::size_t   rows() const { return value().rows(); }
  [[nodiscard]] std::size_t   cols() const { return value().cols(); }
  [[nodiscard]] bool          valid() const { return tape_ != nullptr; }

 private:
  Tape*       tape_ = nullptr;
  std::size_t id_   = 0;
};

class Tape {
 public:
  //! Receives the gradient flowing into the node and adds contributions to its parents.
  using BackwardFn = std::function<void(Tape& tape, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&)            = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  //! Leaf whose gradient can be read back through Var::grad() after backward().
  Var leaf(Tensor value);
  //! Leaf bound to a named parameter; repeated calls return the same node.
  Var param(ParamStore& store, const std::string& name);

  //! Records a new node. `backward` may be empty when no parent needs a gradient.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  //! Adds `g` to the gradient slot of `v` (used inside backward functions).
  void accumulate(const Var& v, const Tensor& g);
  [[nodiscard]] bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }

  void backward(const Var& scalar_output);

  [[nodiscard]] const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  [[nodiscard]] const Tensor& grad(std::size_t id) const;
  [[nodiscard]] std::size_t   size() const { return nodes_.size(); }
  [[nodiscard]] bool          consumed() const { return consumed_; }

 private:
  struct Node {
    Tensor     value;
    Tensor     grad;
    BackwardFn backward;
    bool       requires_grad = false;
    Parameter* sink          = nullptr;
  };

  std::vector<Node>                                 nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool                                              consumed_ = false;
};

// ---------------------------------------------------------------------------
// Ops. Every op checks shapes and throws std::invalid_argument naming the op
// and the offending shapes.

Var matmul(const Var& a, const Var& b);
//! a + b; b may match a, be a 1 x cols row (broadcast down rows) or 1 x 1.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
//! Elementwise a * b; b may match a, be an n x 1 column (broadcast across columns) or 1 x 1.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var transpose(const Var& a);
//! Same row-major data viewed with a new shape.
Var reshape(const Var& a, std::size_t rows, std::size_t cols);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(const Var& x, std::span<const std::size_t> index);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var log(const Var& x);
Var exp(const Var& x);
Var square(const Var& x);
Var reciprocal(const Var& x);

Var sum_all(const Var& x);
Var mean_all(const Var& x);
//! n x 1 column of per-row sums.
Var row_sum(const Var& x);
//! n x 1 column of per-row Euclidean norms.
Var l2_norm_rows(const Var& x);
//! Rows scaled to unit Euclidean norm; zero rows throw.
Var normalize_rows(const Var& x);

//! Column-wise reductions over groups of rows; one output row per segment.
//! Empty segments reduce to zeros. max/min route the gradient to the first
//! attaining row.
Var segment_sum(const Var& x, const kernels::Segments& seg);
Var segment_mean(const Var& x, const kernels::Segments& seg);
Var segment_max(const Var& x, const kernels::Segments& seg);
Var segment_min(const Var& x, const kernels::Segments& seg);
//! sqrt(var + eps) - sqrt(eps) with the population variance; exactly zero for
//! identical rows and differentiable there.
Var segment_std(const Var& x, const kernels::Segments& seg, double eps = 1e-8);

//! Reductions over the row axis (1 x cols results).
Var reduce_mean(const Var& x);
Var reduce_max(const Var& x);
Var reduce_min(const Var& x);
Var reduce_std(const Var& x);

//! n x 1 column of log(sum_j exp(x_ij)) over the entries with mask(i,j) != 0,
//! stabilised by subtracting the row maximum. Rows with an empty mask throw.
Var masked_logsumexp_rows(const Var& x, const Tensor& mask);

//! Inverted dropout; identity when !train or p == 0.
Var dropout(const Var& x, double p, Rng& rng, bool train);

struct BatchNormState {
  Tensor* running_mean = nullptr;
  Tensor* running_var  = nullptr;
  double  momentum     = 0.1;
  double  eps          = 1e-5;
};

//! Per-column batch normalisation. In training mode the batch statistics are
//! used and the running statistics move by `momentum` towards them
//! (running = (1 - momentum) * running + momentum * batch, unbiased variance);
//! in eval mode the running statistics are used.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, const BatchNormState& state, bool train);

// ---------------------------------------------------------------------------

struct GradCheckOptions {
  double        h          = 1e-5;
  std::size_t   samples    = 200;
  std::uint64_t seed       = 0;
  //! Relative error is |analytic - numeric| / max(|analytic|, |numeric|,
  //! abs_floor * max(1, |f|)). The floor sits above the central-difference
  //! roundoff, about eps |f| / h, so exactly-zero gradients do not register
  //! as relative errors of order one.
  double        abs_floor  = 1e-5;
};

struct GradCheckResult {
  double      max_rel_error = 0.0;
  std::size_t checked       = 0;
  std::string worst_param;
};

//! Builds a scalar loss on a fresh tape from the parameters.
using LossBuilder = std::function<Var(Tape&, ParamStore&)>;

//! Compares backward() gradients against central differences
//! (f(theta + h e_k) - f(theta - h e_k)) / 2h on a random subsample of
//! parameter coordinates (all of them when fewer than `samples`).
GradCheckResult check_gradients(const LossBuilder& f, ParamStore& params, const GradCheckOptions& opts = {});

}  // namespace ad
}  // namespace infomax3d
