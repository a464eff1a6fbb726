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
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <string_view>

#include "infomax3d/autodiff.hpp"
#include "infomax3d/config.hpp"
#include "infomax3d/optim.hpp"

namespace infomax3d {

inline constexpr std::uint32_t kCheckpointVersion = 1;

//! Loop position needed to resume a run.
struct TrainingState {
  std::size_t             epoch      = 0;  // completed epochs
  std::size_t             step       = 0;  // completed optimisation steps
  double                  best_val   = std::numeric_limits<double>::infinity();
  std::size_t             best_epoch = 0;
  PlateauScheduler::State plateau;
  std::size_t             adam_steps = 0;
  std::string             rng_state;  // textual std::mt19937_64 state

  bool operator==(const TrainingState&) const = default;
};

//! Named tensors plus the configuration and loop state that produced them.
//!
//! File layout: the 8 magic bytes "IMX3DCKP", a little-endian uint32 version,
//! a little-endian uint64 header length, a JSON header (keys sorted) and the
//! raw little-endian doubles of every tensor in header order.
struct Checkpoint {
  std::string                   kind;  // pretrain, pretrain-distance or finetune
  KeyValues                     config;
  TrainingState                 state;
  std::map<std::string, double> info;
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> buffers;
  std::map<std::string, Tensor> optimizer;  // "m/<param>" and "v/<param>"

  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
//! Throws std::runtime_error describing the first malformed part.
Checkpoint  decode_checkpoint(std::string_view bytes);
//! Writes to a sibling temporary file and renames it into place.
void        write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint  read_checkpoint(const std::filesystem::path& path);

//! Copies every parameter value and buffer of `store` into the checkpoint.
void save_store(const ad::ParamStore& store, Checkpoint& ckpt);
//! Overwrites every parameter and buffer of `store` from the checkpoint.
//! Missing names and shape mismatches are collected and reported together.
void load_store(const Checkpoint& ckpt, ad::ParamStore& store);

void save_optimizer(const Adam& adam, Checkpoint& ckpt);
void load_optimizer(const Checkpoint& ckpt, Adam& adam);

//! Defaults overwritten by the checkpoint's stored configuration.
ModelConfig config_from_checkpoint(const Checkpoint& ckpt);

}  // namespace infomax3d
