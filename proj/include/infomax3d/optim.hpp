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

#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "infomax3d/autodiff.hpp"

namespace infomax3d {

struct AdamOptions {
  double beta1        = 0.9;
  double beta2        = 0.999;
  double eps          = 1e-8;
  double weight_decay = 0.0;  // decoupled: p *= 1 - lr * weight_decay
};

//! Adam with bias correction over parameters drawn from several stores.
//! Every parameter belongs to one learning-rate group.
class Adam {
 public:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  using GroupOf = std::function<std::size_t(const std::string& name)>;

  explicit Adam(AdamOptions options = {}) : options_(options) {}

  //! Registers every parameter of `store`; names must be unique across stores.
  void add(ad::ParamStore& store, const GroupOf& group_of = {});

  //! One update with learning rate lrs[group] per group. A non-finite gradient
  //! throws std::runtime_error naming the parameter before anything changes.
  void step(std::span<const double> lrs);
  void zero_grad();

  [[nodiscard]] std::size_t                           steps() const { return steps_; }
  [[nodiscard]] const AdamOptions&                    options() const { return options_; }
  [[nodiscard]] std::size_t                           group_of(const std::string& name) const;
  [[nodiscard]] const std::map<std::string, Moments>& moments() const { return moments_; }
  //! Restores counters and moments (shapes must match the registered parameters).
  void restore(std::size_t steps, std::map<std::string, Moments> moments);

 private:
  struct Entry {
    ad::Parameter* param;
    std::size_t    group;
  };
  AdamOptions                    options_;
  std::map<std::string, Entry>   entries_;
  std::map<std::string, Moments> moments_;
  std::size_t                    steps_ = 0;
};

// --- learning-rate schedule ---------------------------------------------

//! Linear ramp from 0 at step `start` to the base rate at step `end`; zero
//! before `start`.
struct WarmupSpan {
  std::size_t start = 0;
  std::size_t end   = 0;
};

struct PlateauOptions {
  double      factor   = 0.6;
  std::size_t patience = 25;
  std::size_t cooldown = 20;

  bool operator==(const PlateauOptions&) const = default;
};

//! Reduce-on-plateau state machine. Improvement means a strictly lower metric.
//! After more than `patience` consecutive non-improving evaluations the
//! multiplier is scaled by `factor`; the next `cooldown` evaluations then do
//! not count.
class PlateauScheduler {
 public:
  struct State {
    double      multiplier         = 1.0;
    double      best               = std::numeric_limits<double>::infinity();
    std::size_t num_bad            = 0;
    std::size_t cooldown_remaining = 0;
    std::size_t reductions         = 0;
    bool        operator==(const State&) const = default;
  };

  explicit PlateauScheduler(PlateauOptions options = {});

  //! Returns true when this evaluation triggered a reduction.
  bool step(double metric);

  [[nodiscard]] double                multiplier() const { return state_.multiplier; }
  [[nodiscard]] const State&          state() const { return state_; }
  [[nodiscard]] const PlateauOptions& options() const { return options_; }
  void                                restore(const State& s) { state_ = s; }

 private:
  PlateauOptions options_;
  State          state_;
};

//! Per-group warmup followed by the plateau multiplier. Plateau evaluations
//! are ignored until every warmup span has ended.
class LrSchedule {
 public:
  LrSchedule(double base_lr, std::vector<WarmupSpan> groups, PlateauOptions plateau);

  //! Single group warming up over [0, warmup_steps).
  static LrSchedule pretraining(double base_lr, std::size_t warmup_steps, PlateauOptions plateau);
  //! Groups warming up one after another with the given lengths.
  static LrSchedule sequential(double base_lr, std::span<const std::size_t> lengths, PlateauOptions plateau);

  [[nodiscard]] double              lr(std::size_t step, std::size_t group) const;
  [[nodiscard]] std::vector<double> lrs(std::size_t step) const;
  [[nodiscard]] bool                warmup_done(std::size_t step) const;
  [[nodiscard]] std::size_t         num_groups() const { return groups_.size(); }
  [[nodiscard]] double              base_lr() const { return base_lr_; }

  //! Forwards to the plateau scheduler once warmup is over; returns whether
  //! the rate was reduced.
  bool plateau_step(std::size_t step, double metric);

  [[nodiscard]] const PlateauScheduler& plateau() const { return plateau_; }
  PlateauScheduler&                     plateau() { return plateau_; }

 private:
  double                  base_lr_;
  std::vector<WarmupSpan> groups_;
  PlateauScheduler        plateau_;
};

}  // namespace infomax3d
