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

#include "infomax3d/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace infomax3d {

void Adam::add(ad::ParamStore& store, const GroupOf& group_of) {
  for (auto& [name, p] : store.params()) {
    if (entries_.contains(name)) {
      throw std::invalid_argument("Adam: parameter '" + name + "' registered twice");
    }
    entries_.emplace(name, Entry{&p, group_of ? group_of(name) : 0});
    moments_.emplace(name, Moments{Tensor(p.value.rows(), p.value.cols()), Tensor(p.value.rows(), p.value.cols())});
  }
}

std::size_t Adam::group_of(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::out_of_range("Adam: unknown parameter '" + name + "'");
  }
  return it->second.group;
}

void Adam::step(std::span<const double> lrs) {
  for (const auto& [name, e] : entries_) {
    if (e.group >= lrs.size()) {
      throw std::invalid_argument("Adam: no learning rate for group " + std::to_string(e.group));
    }
    for (double g : e.param->grad.data()) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("non-finite gradient in parameter '" + name + "'");
      }
    }
  }
  ++steps_;
  const double t   = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(options_.beta1, t);
  const double bc2 = 1.0 - std::pow(options_.beta2, t);
  for (auto& [name, e] : entries_) {
    const double lr = lrs[e.group];
    Moments&     mo = moments_.at(name);
    auto&        x  = e.param->value.data();
    const auto&  g  = e.param->grad.data();
    auto&        m  = mo.m.data();
    auto&        v  = mo.v.data();
    const double decay = 1.0 - lr * options_.weight_decay;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      if (options_.weight_decay > 0.0) x[i] *= decay;
      x[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& [_, e] : entries_) e.param->grad.fill(0.0);
}

void Adam::restore(std::size_t steps, std::map<std::string, Moments> moments) {
  for (const auto& [name, e] : entries_) {
    auto it = moments.find(name);
    if (it == moments.end() || !it->second.m.same_shape(e.param->value) || !it->second.v.same_shape(e.param->value)) {
      throw std::invalid_argument("Adam: optimizer state missing or mis-shaped for '" + name + "'");
    }
  }
  steps_   = steps;
  moments_ = std::move(moments);
}

PlateauScheduler::PlateauScheduler(PlateauOptions options) : options_(options) {
  if (!(options_.factor > 0.0 && options_.factor < 1.0)) {
    throw std::invalid_argument("plateau factor must be in (0, 1)");
  }
}

bool PlateauScheduler::step(double metric) {
  if (metric < state_.best) {
    state_.best    = metric;
    state_.num_bad = 0;
  } else {
    ++state_.num_bad;
  }
  if (state_.cooldown_remaining > 0) {
    --state_.cooldown_remaining;
    state_.num_bad = 0;
  }
  if (state_.num_bad > options_.patience) {
    state_.multiplier *= options_.factor;
    state_.cooldown_remaining = options_.cooldown;
    state_.num_bad            = 0;
    ++state_.reductions;
    return true;
  }
  return false;
}

LrSchedule::LrSchedule(double base_lr, std::vector<WarmupSpan> groups, PlateauOptions plateau)
    : base_lr_(base_lr), groups_(std::move(groups)), plateau_(plateau) {
  if (!(base_lr_ > 0.0)) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (groups_.empty()) {
    throw std::invalid_argument("schedule needs at least one parameter group");
  }
  for (const auto& g : groups_) {
    if (g.end < g.start) throw std::invalid_argument("warmup span ends before it starts");
  }
}

LrSchedule LrSchedule::pretraining(double base_lr, std::size_t warmup_steps, PlateauOptions plateau) {
  return LrSchedule(base_lr, {WarmupSpan{0, warmup_steps}}, plateau);
}

LrSchedule LrSchedule::sequential(double base_lr, std::span<const std::size_t> lengths, PlateauOptions plateau) {
  std::vector<WarmupSpan> groups;
  std::size_t             start = 0;
  for (std::size_t len : lengths) {
    groups.push_back(WarmupSpan{start, start + len});
    start += len;
  }
  return LrSchedule(base_lr, std::move(groups), plateau);
}

double LrSchedule::lr(std::size_t step, std::size_t group) const {
  const WarmupSpan& g = groups_.at(group);
  double            ramp;
  if (step >= g.end) {
    ramp = 1.0;
  } else if (step < g.start) {
    ramp = 0.0;
  } else {
    ramp = static_cast<double>(step - g.start) / static_cast<double>(g.end - g.start);
  }
  return base_lr_ * ramp * plateau_.multiplier();
}

std::vector<double> LrSchedule::lrs(std::size_t step) const {
  std::vector<double> out(groups_.size());
  for (std::size_t g = 0; g < groups_.size(); ++g) out[g] = lr(step, g);
  return out;
}

bool LrSchedule::warmup_done(std::size_t step) const {
  return std::all_of(groups_.begin(), groups_.end(), [step](const WarmupSpan& g) { return step >= g.end; });
}

bool LrSchedule::plateau_step(std::size_t step, double metric) {
  if (!warmup_done(step)) return false;
  return plateau_.step(metric);
}

}  // namespace infomax3d
