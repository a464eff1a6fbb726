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
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "infomax3d/checkpoint.hpp"
#include "infomax3d/config.hpp"
#include "infomax3d/molgraph.hpp"

namespace infomax3d {

//! One line of the metrics report.
struct EpochRecord {
  std::size_t           epoch = 0;  // 1-based
  std::size_t           step  = 0;  // optimisation steps so far
  std::vector<double>   lrs;        // per group, at the last step of the epoch
  double                train_loss = 0.0;
  double                val_loss   = 0.0;
  std::optional<double> val_metric;
  bool                  improved = false;  // new best validation score

  bool operator==(const EpochRecord&) const = default;
};

//! Single-line JSON object.
std::string to_json_line(const EpochRecord& record);

struct RunHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  //! Called with the state after every epoch (for resumable runs).
  std::function<void(const Checkpoint&)>  on_checkpoint;
};

struct PretrainResult {
  std::vector<double>      loss_trace;  // training loss per optimisation step
  std::vector<EpochRecord> epochs;
  Checkpoint               best;  // lowest validation loss
  Checkpoint               last;
};

//! Joint contrastive training of Net2D and Net3D, or Net2D plus a distance
//! head when config.loss.kind is distance_mse. Molecules need conformers and
//! features. `resume` continues a run from its last checkpoint.
PretrainResult pretrain(const ModelConfig& config, const Dataset& train, const Dataset& val,
                        const RunHooks& hooks = {}, const Checkpoint* resume = nullptr);

//! pretrain() with the distance-prediction objective.
PretrainResult pretrain_distance(ModelConfig config, const Dataset& train, const Dataset& val,
                                 const RunHooks& hooks = {});

using MetricMap = std::map<std::string, double>;

struct FinetuneReport {
  std::vector<EpochRecord> epochs;
  std::size_t              best_epoch = 0;
  MetricMap                train;
  MetricMap                val;
  MetricMap                test;
  Checkpoint               best;
};

//! Supervised training of Net2D plus a fresh two-layer head on
//! config.train.target. With `pretrained` the Net2D weights are transferred;
//! without it they are randomly initialised (the head is seeded identically in
//! both cases). Regression targets are standardised with training statistics
//! and metrics are reported in the original units.
FinetuneReport finetune(const ModelConfig& config, const Checkpoint* pretrained, const DatasetSplit& data,
                        const RunHooks& hooks = {});

//! Eval-mode z^a of every molecule, one row each.
Tensor embeddings(const Checkpoint& ckpt, const Dataset& dataset);
//! `id<TAB>v1,v2,...` lines in dataset order.
std::string format_embeddings(const Dataset& dataset, const Tensor& z);

//! Consecutive index chunks of `size`; a trailing single element joins the
//! previous chunk so no batch holds one molecule unless n == 1.
std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order, std::size_t size);

}  // namespace infomax3d
