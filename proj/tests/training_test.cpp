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

#include "infomax3d/training.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "infomax3d/synthetic.hpp"
#include "test_util.hpp"

namespace infomax3d {
namespace {

using infomax3d::testing::random_permutation;

Dataset synthetic(std::size_t n, std::uint64_t seed, std::size_t max_atoms = 10) {
  SyntheticOptions o;
  o.num_molecules = n;
  o.max_atoms     = max_atoms;
  o.seed          = seed;
  Dataset ds      = make_synthetic_dataset(o);
  featurize_all(ds);
  return ds;
}

Dataset subset(const Dataset& ds, std::size_t begin, std::size_t end) {
  Dataset out;
  out.target_names = ds.target_names;
  out.molecules.assign(ds.molecules.begin() + static_cast<std::ptrdiff_t>(begin),
                       ds.molecules.begin() + static_cast<std::ptrdiff_t>(end));
  out.target_stats = compute_target_stats(out);
  return out;
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.net2d.depth        = 2;
  c.net2d.d_h          = 16;
  c.net2d.d_z          = 16;
  c.net3d.d_h          = 8;
  c.net3d.d_d          = 8;
  c.net3d.d_z          = 16;
  c.train.batch_size   = 16;
  c.train.max_epochs   = 4;
  c.train.lr           = 1e-3;
  c.train.warmup_steps = {5};
  return c;
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

TEST(Batches, TrailingSingletonJoinsPreviousChunk) {
  std::vector<std::size_t> order(9);
  std::iota(order.begin(), order.end(), 0);
  auto b = make_batches(order, 4);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0].size(), 4u);
  EXPECT_EQ(b[1], (std::vector<std::size_t>{4, 5, 6, 7, 8}));
  b = make_batches(std::span(order).first(6), 4);
  EXPECT_EQ(b[1].size(), 2u);
  b = make_batches(std::span(order).first(1), 4);
  EXPECT_EQ(b.size(), 1u);
}

TEST(Pretrain, SmokeLossHalves) {
  const Dataset ds  = synthetic(64, 1);
  const Dataset val = synthetic(16, 2);
  ModelConfig   c   = tiny_config();
  c.train.max_epochs = 1000;
  c.train.max_steps  = 200;
  const auto r = pretrain(c, ds, val);
  ASSERT_EQ(r.loss_trace.size(), 200u);
  const double head = mean_of(std::span(r.loss_trace).first(5));
  const double tail = mean_of(std::span(r.loss_trace).last(5));
  EXPECT_LE(tail, 0.5 * head) << "first five " << head << ", last five " << tail;
}

TEST(Pretrain, Multi3dWithOneConformerReproducesNtXent) {
  const Dataset ds  = synthetic(32, 3);
  const Dataset val = synthetic(8, 4);
  ModelConfig   a   = tiny_config();
  a.train.max_epochs = 3;
  ModelConfig b      = a;
  b.loss.kind        = LossKind::kMulti3dEq2;
  b.loss.c           = 1;
  const auto ra = pretrain(a, ds, val);
  const auto rb = pretrain(b, ds, val);
  ASSERT_EQ(ra.loss_trace.size(), rb.loss_trace.size());
  for (std::size_t i = 0; i < ra.loss_trace.size(); ++i) {
    EXPECT_NEAR(ra.loss_trace[i], rb.loss_trace[i], 1e-12) << "step " << i;
  }
}

TEST(Pretrain, DeterministicTraceAndCheckpointBytes) {
  const Dataset ds  = synthetic(32, 5);
  const Dataset val = synthetic(8, 6);
  ModelConfig   c   = tiny_config();
  c.train.conformer_mode = ConformerMode::kBoltzmann;
  c.train.node_drop      = 0.1;
  c.net2d.dropout        = 0.1;
  const auto r1 = pretrain(c, ds, val);
  const auto r2 = pretrain(c, ds, val);
  EXPECT_EQ(r1.loss_trace, r2.loss_trace);
  EXPECT_EQ(encode_checkpoint(r1.last), encode_checkpoint(r2.last));
  EXPECT_EQ(encode_checkpoint(r1.best), encode_checkpoint(r2.best));
  c.train.seed = 1;
  EXPECT_NE(pretrain(c, ds, val).loss_trace, r1.loss_trace);
}

TEST(Pretrain, ResumeMatchesUninterruptedRun) {
  const Dataset ds  = synthetic(32, 7);
  const Dataset val = synthetic(8, 8);
  ModelConfig   c   = tiny_config();
  c.train.conformer_mode = ConformerMode::kUniform;
  const auto full = pretrain(c, ds, val);

  ModelConfig first       = c;
  first.train.max_epochs  = 2;
  const auto part         = pretrain(first, ds, val);
  const auto rest         = pretrain(c, ds, val, {}, &part.last);
  EXPECT_EQ(encode_checkpoint(rest.last), encode_checkpoint(full.last));
  std::vector<double> joined = part.loss_trace;
  joined.insert(joined.end(), rest.loss_trace.begin(), rest.loss_trace.end());
  EXPECT_EQ(joined, full.loss_trace);

  ModelConfig other = c;
  other.net2d.d_h   = 8;
  EXPECT_THROW(pretrain(other, ds, val, {}, &part.last), std::invalid_argument);
}

TEST(Pretrain, UpdatesBothNetworksAndKeepsBestValidation) {
  const Dataset ds  = synthetic(32, 9);
  const Dataset val = synthetic(8, 10);
  ModelConfig   c   = tiny_config();
  std::vector<EpochRecord> seen;
  RunHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) { seen.push_back(r); };
  const auto r   = pretrain(c, ds, val, hooks);
  EXPECT_EQ(seen, r.epochs);
  ASSERT_EQ(r.epochs.size(), 4u);

  Net2D fresh2(c.net2d, c.train.seed);
  Net3D fresh3(c.net3d, c.train.seed + 1);
  EXPECT_NE(r.last.params.at("net2d.node_enc.weight"), fresh2.params().at("net2d.node_enc.weight").value);
  EXPECT_NE(r.last.params.at("net3d.h0"), fresh3.params().at("net3d.h0").value);

  for (const auto& e : r.epochs) EXPECT_LE(r.best.state.best_val, e.val_loss);
  EXPECT_EQ(r.best.state.best_epoch, r.best.state.epoch);
  EXPECT_EQ(r.best.kind, "pretrain");
}

TEST(Pretrain, MultiConformerLossesRun) {
  const Dataset ds  = synthetic(16, 11);
  const Dataset val = synthetic(4, 12);
  for (LossKind k : {LossKind::kMulti3dEq2, LossKind::kMulti2dSimAll, LossKind::kMulti2dSimMax}) {
    ModelConfig c      = tiny_config();
    c.train.max_epochs = 2;
    c.train.batch_size = 8;
    c.loss.kind        = k;
    c.loss.c           = 3;
    if (k != LossKind::kMulti3dEq2) c.net2d.num_outputs = 3;
    const auto r = pretrain(c, ds, val);
    EXPECT_EQ(r.loss_trace.size(), 4u) << to_string(k);
    for (double v : r.loss_trace) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Pretrain, ConfigurationErrors) {
  const Dataset ds  = synthetic(8, 13);
  const Dataset val = synthetic(4, 14);
  ModelConfig   c   = tiny_config();
  c.train.batch_size = 1;
  EXPECT_THROW(pretrain(c, ds, val), std::invalid_argument);
  c = tiny_config();
  c.net3d.d_z = 8;
  EXPECT_THROW(pretrain(c, ds, val), std::invalid_argument);
  c = tiny_config();
  c.loss.kind = LossKind::kMulti2dSimAll;
  c.loss.c    = 2;
  EXPECT_THROW(pretrain(c, ds, val), std::invalid_argument);  // num_outputs != c
  c = tiny_config();
  Dataset flat = ds;
  flat.molecules[3].conformers.reset();
  try {
    pretrain(c, flat, val);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find(flat.molecules[3].id), std::string::npos);
  }
}

// Colour refinement; true when every atom ends with its own colour, so no
// two atoms are interchangeable for a message-passing encoder.
bool atoms_distinguishable(const MolecularGraph& g) {
  const std::size_t                     n = g.num_atoms();
  std::vector<std::vector<std::size_t>> nbr(n);
  for (const auto& b : g.bonds) {
    nbr[b.u].push_back(b.v);
    nbr[b.v].push_back(b.u);
  }
  std::vector<std::size_t> colour(n);
  for (std::size_t i = 0; i < n; ++i) colour[i] = static_cast<std::size_t>(g.atoms[i].atomic_number);
  for (std::size_t round = 0; round < n; ++round) {
    std::vector<std::vector<std::size_t>> sig(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j : nbr[i]) sig[i].push_back(colour[j]);
      std::sort(sig[i].begin(), sig[i].end());
      sig[i].insert(sig[i].begin(), colour[i]);
    }
    auto sorted = sig;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (std::size_t i = 0; i < n; ++i) {
      colour[i] = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), sig[i]) - sorted.begin());
    }
  }
  std::sort(colour.begin(), colour.end());
  return std::adjacent_find(colour.begin(), colour.end()) == colour.end();
}

//! Four small molecules without interchangeable atoms, so every distance is
//! a function of the graph.
Dataset four_rigid_molecules() {
  SyntheticOptions o;
  o.num_molecules = 200;
  o.min_atoms     = 5;
  o.max_atoms     = 7;
  o.seed          = 15;
  const Dataset all = make_synthetic_dataset(o);
  Dataset       out;
  out.target_names = all.target_names;
  for (const auto& m : all.molecules) {
    if (out.size() < 4 && atoms_distinguishable(m)) out.molecules.push_back(featurize(m));
  }
  return out;
}

TEST(PretrainDistance, OverfitsFourMolecules) {
  const Dataset ds = four_rigid_molecules();
  ASSERT_EQ(ds.size(), 4u);
  ModelConfig c        = tiny_config();
  c.net2d.depth        = 3;
  c.train.batch_size   = 4;
  c.train.max_epochs   = 2000;
  c.train.warmup_steps = {0};
  c.train.lr           = 3e-3;
  c.train.plateau      = {0.5, 50, 0};
  const auto r = pretrain_distance(c, ds, ds);
  ASSERT_LE(r.loss_trace.size(), 2000u);
  // Training-mode pair MSE of the last step.
  EXPECT_LT(r.loss_trace.back(), 1e-3);
  EXPECT_EQ(r.best.kind, "pretrain-distance");
  EXPECT_TRUE(r.best.params.contains("dist.u.0.weight"));
  EXPECT_FALSE(r.best.params.contains("net3d.h0"));
}

TEST(Finetune, OverfitsLinearTarget) {
  Dataset ds = synthetic(8, 16);
  ModelConfig c = tiny_config();
  c.train              = TrainConfig::finetuning();
  c.train.target       = kLinearTarget;
  // Eval-mode running statistics differ from batch statistics by the
  // unbiased-variance factor, which alone exceeds the tolerance.
  c.net2d.batch_norm   = false;
  c.train.batch_size   = 8;
  c.train.max_epochs   = 600;
  c.train.lr           = 3e-3;
  c.train.warmup_steps = {5, 5, 5};
  c.train.plateau      = {0.5, 25, 0};
  const auto r = finetune(c, nullptr, DatasetSplit{ds, ds, ds});
  EXPECT_LT(r.train.at("mae"), 1e-2);
  EXPECT_FALSE(r.best.params.contains("net3d.h0"));
}

TEST(Finetune, TransferAndRandInitShareTheHeadInit) {
  const Dataset pre = synthetic(16, 17);
  ModelConfig   pc  = tiny_config();
  pc.train.max_epochs   = 2;
  pc.train.warmup_steps = {0};
  const auto pretrained = pretrain(pc, pre, pre);

  const Dataset fine = synthetic(12, 18);
  ModelConfig   fc   = pc;
  fc.train           = TrainConfig::finetuning();
  fc.train.target    = kMeanDistTarget;
  fc.train.max_steps = 1;  // every group still has lr 0
  const DatasetSplit split{subset(fine, 0, 8), subset(fine, 8, 10), subset(fine, 10, 12)};
  const auto         a = finetune(fc, &pretrained.best, split);
  const auto         b = finetune(fc, nullptr, split);
  for (const auto& [name, t] : a.best.params) {
    if (name.rfind("head.", 0) == 0) {
      EXPECT_EQ(t, b.best.params.at(name)) << name;
    } else {
      EXPECT_EQ(t, pretrained.best.params.at(name)) << name;
      EXPECT_NE(t, b.best.params.at(name)) << name;
    }
  }
}

TEST(Finetune, MetricsReportedInOriginalUnits) {
  const Dataset ds = synthetic(16, 19);
  Dataset       scaled = ds;
  const std::size_t t  = ds.target_index(kMeanDistTarget);
  for (auto& m : scaled.molecules) m.targets[t] = 4.0 * m.targets[t] - 3.0;
  ModelConfig c        = tiny_config();
  c.train              = TrainConfig::finetuning();
  c.train.target       = kMeanDistTarget;
  c.train.batch_size   = 8;
  c.train.max_epochs   = 5;
  c.train.lr           = 1e-3;
  c.train.warmup_steps = {1, 1, 1};
  const auto a = finetune(c, nullptr, DatasetSplit{subset(ds, 0, 10), subset(ds, 10, 13), subset(ds, 13, 16)});
  const auto b = finetune(c, nullptr,
                          DatasetSplit{subset(scaled, 0, 10), subset(scaled, 10, 13), subset(scaled, 13, 16)});
  EXPECT_NEAR(b.test.at("mae"), 4.0 * a.test.at("mae"), 1e-9 * (1.0 + a.test.at("mae")));
  EXPECT_NEAR(b.test.at("rmse"), 4.0 * a.test.at("rmse"), 1e-9 * (1.0 + a.test.at("rmse")));
  EXPECT_NEAR(b.train.at("loss"), a.train.at("loss"), 1e-9);
}

TEST(Finetune, ClassificationReportsAuc) {
  Dataset           ds = synthetic(24, 20);
  const std::size_t t  = ds.target_index(kLinearTarget);
  std::vector<double> v;
  for (const auto& m : ds.molecules) v.push_back(m.targets[t]);
  std::nth_element(v.begin(), v.begin() + 12, v.end());
  const double median = v[12];
  for (auto& m : ds.molecules) m.targets[t] = m.targets[t] >= median ? 1.0 : 0.0;
  ModelConfig c        = tiny_config();
  c.train              = TrainConfig::finetuning();
  c.train.target       = kLinearTarget;
  c.train.classification = true;
  c.train.batch_size   = 8;
  c.train.max_epochs   = 3;
  c.train.lr           = 1e-3;
  c.train.warmup_steps = {1, 1, 1};
  const auto r = finetune(c, nullptr, DatasetSplit{ds, ds, ds});
  ASSERT_TRUE(r.test.contains("roc_auc"));
  EXPECT_GE(r.test.at("roc_auc"), 0.0);
  EXPECT_LE(r.test.at("roc_auc"), 1.0);
  ASSERT_TRUE(r.epochs.front().val_metric.has_value());
}

TEST(Finetune, ConfigMismatchListsFields) {
  const Dataset ds = synthetic(8, 21);
  ModelConfig   pc = tiny_config();
  pc.train.max_epochs = 1;
  pc.train.batch_size = 4;
  const auto pre = pretrain(pc, ds, ds);
  ModelConfig fc = pc;
  fc.train       = TrainConfig::finetuning();
  fc.train.target = kLinearTarget;
  fc.net2d.d_h   = 12;
  fc.net2d.depth = 3;
  try {
    finetune(fc, &pre.best, DatasetSplit{ds, ds, ds});
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("net2d.d_h: 16 != 12"), std::string::npos) << msg;
    EXPECT_NE(msg.find("net2d.depth: 2 != 3"), std::string::npos) << msg;
  }
  fc = pc;
  fc.train        = TrainConfig::finetuning();
  fc.train.target = "nope";
  EXPECT_THROW(finetune(fc, &pre.best, DatasetSplit{ds, ds, ds}), std::out_of_range);
}

MolecularGraph permuted(const MolecularGraph& g, std::mt19937_64& rng) {
  const auto     perm = random_permutation(g.num_atoms(), rng);
  MolecularGraph out;
  out.id = g.id + "_perm";
  out.atoms.resize(g.num_atoms());
  for (std::size_t i = 0; i < g.num_atoms(); ++i) out.atoms[perm[i]] = g.atoms[i];
  for (const auto& b : g.bonds) out.bonds.push_back(Bond{perm[b.v], perm[b.u], b.order});
  std::shuffle(out.bonds.begin(), out.bonds.end(), rng);
  out.recompute_degrees();
  return featurize(out);
}

TEST(Embed, DeterministicAndPermutationInvariant) {
  const Dataset ds = synthetic(16, 22);
  ModelConfig   c  = tiny_config();
  c.train.max_epochs = 2;
  c.train.batch_size = 8;
  const auto pre     = pretrain(c, ds, ds);

  Dataset         query;
  std::mt19937_64 rng(4);
  for (std::size_t i = 0; i < 5; ++i) {
    query.molecules.push_back(ds.molecules[i]);
    query.molecules.push_back(permuted(ds.molecules[i], rng));
  }
  const Tensor z = embeddings(pre.best, query);
  ASSERT_EQ(z.rows(), 10u);
  ASSERT_EQ(z.cols(), 16u);
  for (std::size_t i = 0; i < 10; i += 2) {
    for (std::size_t j = 0; j < z.cols(); ++j) EXPECT_EQ(z(i, j), z(i + 1, j)) << i;
  }
  const std::string text = format_embeddings(query, z);
  EXPECT_EQ(text, format_embeddings(query, embeddings(pre.best, query)));
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 10);
  EXPECT_EQ(text.substr(0, text.find('\t')), query.molecules[0].id);
}

}  // namespace
}  // namespace infomax3d
