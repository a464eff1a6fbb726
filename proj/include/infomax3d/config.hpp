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
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "infomax3d/losses.hpp"
#include "infomax3d/net2d.hpp"
#include "infomax3d/net3d.hpp"
#include "infomax3d/optim.hpp"

namespace infomax3d {

//! Which 3D view a molecule contributes to a single-conformer loss.
enum class ConformerMode { kLowest, kUniform, kBoltzmann };

std::string_view to_string(ConformerMode m);
ConformerMode    parse_conformer_mode(std::string_view name);

//! Optimisation loop settings shared by pre-training and fine-tuning.
struct TrainConfig {
  std::size_t              batch_size   = 500;
  std::size_t              max_epochs   = 100;
  //! Stops after this many optimisation steps when non-zero.
  std::size_t              max_steps    = 0;
  double                   lr           = 8e-5;
  double                   weight_decay = 0.0;
  //! One warmup length per parameter group; groups ramp one after another.
  std::vector<std::size_t> warmup_steps = {700};
  PlateauOptions           plateau      = {0.6, 25, 20};
  ConformerMode            conformer_mode = ConformerMode::kLowest;
  //! Fraction of atoms removed from each 2D graph during pre-training.
  double                   node_drop      = 0.0;
  std::uint64_t            seed           = 0;
  //! Fine-tuning only.
  std::string              target;
  bool                     classification = false;
  //! Hidden width of the fine-tuning head; 0 means the encoder output width.
  std::size_t              head_hidden    = 0;

  static TrainConfig pretraining();
  static TrainConfig finetuning();

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

//! Everything that defines a run besides the data.
struct ModelConfig {
  Net2DConfig net2d;
  Net3DConfig net3d;
  LossConfig  loss;
  TrainConfig train;

  bool operator==(const ModelConfig&) const = default;
};

//! Flat "section.field" -> text view of a configuration, sorted by key.
using KeyValues = std::map<std::string, std::string>;

KeyValues   to_key_values(const ModelConfig& config);
//! Sets one field; throws std::invalid_argument for unknown keys or bad values.
void        set_key_value(ModelConfig& config, std::string_view key, std::string_view value);
void        apply_key_values(ModelConfig& config, const KeyValues& values);
//! Every known key in sorted order.
std::vector<std::string> config_keys();

//! `key = value` lines; blank lines and lines starting with '#' are skipped.
KeyValues   parse_key_value_text(std::string_view text);
KeyValues   read_key_value_file(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& values);

//! Keys under `prefix` whose values differ, formatted "key: a != b".
std::vector<std::string> diff_key_values(const KeyValues& a, const KeyValues& b, std::string_view prefix);

}  // namespace infomax3d
