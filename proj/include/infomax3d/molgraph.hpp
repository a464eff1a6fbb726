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
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "infomax3d/conformer.hpp"
#include "infomax3d/tensor.hpp"

namespace infomax3d {

enum class BondOrder : std::uint8_t { kSingle, kDouble, kTriple, kAromatic };

struct Atom {
  int atomic_number = 6;
  int formal_charge = 0;
  int degree        = 0;  // derived from the bond list

  bool operator==(const Atom&) const = default;
};

//! Undirected bond, stored once.
struct Bond {
  std::size_t u     = 0;
  std::size_t v     = 0;
  BondOrder   order = BondOrder::kSingle;

  bool operator==(const Bond&) const = default;
};

struct MolecularGraph {
  std::string         id;
  std::vector<Atom>   atoms;
  std::vector<Bond>   bonds;
  Tensor              atom_features;  // n x kAtomFeatureDim once featurized
  Tensor              bond_features;  // |E| x kBondFeatureDim once featurized
  std::vector<double> targets;        // aligned with Dataset::target_names
  std::optional<ConformerSet> conformers;

  [[nodiscard]] std::size_t num_atoms() const { return atoms.size(); }
  [[nodiscard]] bool        featurized() const;
  //! Recomputes every Atom::degree from the bond list.
  void recompute_degrees();
  //! Throws std::invalid_argument describing the first broken invariant.
  void validate() const;

  bool operator==(const MolecularGraph&) const = default;
};

struct TargetStats {
  double mean   = 0.0;
  double stddev = 1.0;

  bool operator==(const TargetStats&) const = default;
};

struct Dataset {
  std::vector<MolecularGraph> molecules;
  std::vector<std::string>    target_names;
  std::vector<TargetStats>    target_stats;  // from the training split

  [[nodiscard]] std::size_t size() const { return molecules.size(); }
  //! Index of a target name; throws std::out_of_range naming the known targets.
  [[nodiscard]] std::size_t target_index(std::string_view name) const;

  bool operator==(const Dataset&) const = default;
};

// --- element table --------------------------------------------------------

//! Atomic number for an element symbol, or 0 when unknown.
int         atomic_number(std::string_view symbol);
std::string_view element_symbol(int atomic_number);

// --- dataset file ------------------------------------------------------------

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& message);

  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] std::size_t column() const { return column_; }
  [[nodiscard]] const std::string& message() const { return message_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string message_;
};

//! Parses the line-oriented dataset format. Records keep file order; target
//! statistics are computed over the whole file (re-derive them after split).
Dataset parse_dataset(const std::filesystem::path& path);
Dataset parse_dataset_text(std::string_view text);

//! One record line (no trailing newline) that parses back to `graph`.
std::string serialize_record(const MolecularGraph& graph, const std::vector<std::string>& target_names);
std::string serialize_dataset(const Dataset& dataset);
void        write_dataset(const std::filesystem::path& path, const Dataset& dataset);

// --- features ----------------------------------------------------------------

enum class FeatureScheme { kMinimal };

//! Atomic number one-hot: elements 1..36 plus an "other" bucket.
inline constexpr std::size_t kAtomicNumberBuckets = 37;
//! Degree one-hot: 0..5 plus ">= 6".
inline constexpr std::size_t kDegreeBuckets = 7;
//! Formal charge one-hot: -2..+2 plus "other".
inline constexpr std::size_t kChargeBuckets   = 6;
inline constexpr std::size_t kAtomFeatureDim  = kAtomicNumberBuckets + kDegreeBuckets + kChargeBuckets;
inline constexpr std::size_t kBondFeatureDim  = 4;

MolecularGraph featurize(MolecularGraph graph, FeatureScheme scheme = FeatureScheme::kMinimal);
void           featurize_all(Dataset& dataset, FeatureScheme scheme = FeatureScheme::kMinimal);

// --- splitting and augmentation -------------------------------------------

struct SplitRatios {
  double train = 0.8;
  double val   = 0.1;
  double test  = 0.1;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

//! Train gets floor(r_train * n), val floor(r_val * n), test the remainder.
//! All three carry target statistics of the training part.
DatasetSplit split_random(const Dataset& dataset, SplitRatios ratios, std::uint64_t seed);

//! Per-target mean and population standard deviation (1 when degenerate).
std::vector<TargetStats> compute_target_stats(const Dataset& dataset);

//! Removes floor(ratio * n) atoms chosen uniformly without replacement along
//! with their bonds and their rows in every conformer; indices are compacted
//! and features recomputed when present.
MolecularGraph node_drop(const MolecularGraph& graph, double ratio, std::mt19937_64& rng);

}  // namespace infomax3d
