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

#include "infomax3d/molgraph.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "infomax3d/synthetic.hpp"
#include "test_util.hpp"

namespace infomax3d {
namespace {

using infomax3d::testing::random_permutation;

TEST(Elements, SymbolRoundTrip) {
  EXPECT_EQ(atomic_number("C"), 6);
  EXPECT_EQ(atomic_number("Og"), 118);
  EXPECT_EQ(atomic_number("Xx"), 0);
  EXPECT_EQ(atomic_number("c"), 0);
  for (int z = 1; z <= 118; ++z) EXPECT_EQ(atomic_number(element_symbol(z)), z);
  EXPECT_THROW(element_symbol(119), std::out_of_range);
}

TEST(Parse, MinimalRecord) {
  const auto ds = parse_dataset_text("id=m1; atoms=C,O; bonds=0-1:1; coords3d=[(0,0,0),(1.2,0,0)]\n");
  ASSERT_EQ(ds.size(), 1u);
  const auto& g = ds.molecules[0];
  EXPECT_EQ(g.id, "m1");
  EXPECT_EQ(g.num_atoms(), 2u);
  ASSERT_EQ(g.bonds.size(), 1u);
  EXPECT_EQ(g.bonds[0], (Bond{0, 1, BondOrder::kSingle}));
  ASSERT_TRUE(g.conformers.has_value());
  EXPECT_EQ(g.conformers->size(), 1u);
  EXPECT_EQ((*g.conformers)[0].coords(1, 0), 1.2);
  EXPECT_EQ(g.atoms[0].degree, 1);
  EXPECT_TRUE(ds.target_names.empty());
}

TEST(Parse, AllFields) {
  const auto ds = parse_dataset_text(
      "# header comment\n"
      "\n"
      "id=a; atoms=C,N,O; bonds=0-1:2,1-2:a; charges=0,1,-1; "
      "coords3d=[(0,0,0),(1,0,0),(2,0,0)]; coords3d=[(0,0,0),(1,1,0),(2,0,0)]; "
      "energies=1.5,0.25; weights=0.3,0.7; targets=homo:-0.25,gap:3;\n"
      "  # indented comment\n"
      "id=b; atoms=S; bonds=; targets=gap:1,homo:2\n");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.target_names, (std::vector<std::string>{"homo", "gap"}));
  const auto& a = ds.molecules[0];
  EXPECT_EQ(a.atoms[1].formal_charge, 1);
  EXPECT_EQ(a.atoms[2].formal_charge, -1);
  EXPECT_EQ(a.bonds[1].order, BondOrder::kAromatic);
  EXPECT_EQ(a.atoms[1].degree, 2);
  // Sorted by energy: the second coords3d entry comes first.
  EXPECT_EQ(*(*a.conformers)[0].energy, 0.25);
  EXPECT_EQ(*(*a.conformers)[0].weight, 0.7);
  EXPECT_EQ((*a.conformers)[0].coords(1, 1), 1.0);
  EXPECT_EQ(a.targets, (std::vector<double>{-0.25, 3.0}));
  EXPECT_EQ(ds.molecules[1].targets, (std::vector<double>{2.0, 1.0}));
  EXPECT_FALSE(ds.molecules[1].conformers.has_value());
}

ParseError parse_error(const std::string& text) {
  try {
    parse_dataset_text(text);
  } catch (const ParseError& e) {
    return e;
  }
  ADD_FAILURE() << "no ParseError for: " << text;
  return ParseError(0, 0, "");
}

TEST(Parse, AtomIndexOutOfRange) {
  const auto e = parse_error("id=m1; atoms=C,O; bonds=0-5:1\n");
  EXPECT_EQ(e.line(), 1u);
  EXPECT_NE(std::string(e.what()).find("atom index out of range"), std::string::npos);
}

TEST(Parse, ErrorsCarryLineAndColumn) {
  const auto e = parse_error("# c\nid=ok; atoms=C\nid=bad; atoms=C,Q\n");
  EXPECT_EQ(e.line(), 3u);
  EXPECT_EQ(e.column(), 17u);
  EXPECT_NE(e.message().find("unknown element"), std::string::npos);
  EXPECT_EQ(std::string(e.what()).rfind("line 3, column 17: ", 0), 0u);
}

TEST(Parse, RejectsMalformedRecords) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"id=a; atoms=C\nid=a; atoms=O\n", "duplicate molecule id"},
      {"atoms=C\n", "missing field 'id'"},
      {"id=a\n", "atoms"},
      {"id=a; atoms=C,C; bonds=0-1:5\n", "unknown bond order"},
      {"id=a; atoms=C,C; bonds=0-0:1\n", "self-loop"},
      {"id=a; atoms=C,C; bonds=0-1:1,1-0:1\n", "duplicate bond"},
      {"id=a; atoms=C,C; coords3d=[(0,0,0)]\n", "coords3d has 1 points"},
      {"id=a; atoms=C; coords3d=[(0,0)]\n", "exactly 3"},
      {"id=a; atoms=C; coords3d=[(0,0,x)]\n", "real number"},
      {"id=a; atoms=C; coords3d=[(0,0,0)\n", "unbalanced"},
      {"id=a; atoms=C; energies=1\n", "without coords3d"},
      {"id=a; atoms=C; coords3d=[(0,0,0)]; energies=1,2\n", "energies has 2"},
      {"id=a; atoms=C; coords3d=[(0,0,0)]; weights=0.5\n", "sum to"},
      {"id=a; atoms=C; charges=1,2\n", "charges has 2"},
      {"id=a; atoms=C; colour=red\n", "unknown field"},
      {"id=a; atoms=C; atoms=O\n", "duplicate field"},
      {"id=a; atoms=C junk\n", "unknown element"},
      {"id=a; atoms=C; targets=x:1\nid=b; atoms=C; targets=y:1\n", "not present"},
      {"id=a; atoms=C; targets=x:1\nid=b; atoms=C\n", "do not match"},
  };
  for (const auto& [text, fragment] : cases) {
    const auto e = parse_error(text);
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << text << " -> " << e.what();
  }
}

TEST(Parse, MissingFileIsIoError) {
  EXPECT_THROW(parse_dataset("/nonexistent/path/data.mol"), std::runtime_error);
}

TEST(Parse, SerializeRoundTripOnSyntheticRecords) {
  SyntheticOptions opt;
  opt.num_molecules = 64;
  opt.seed          = 17;
  const Dataset original = make_synthetic_dataset(opt);
  const Dataset parsed   = parse_dataset_text(serialize_dataset(original));
  ASSERT_EQ(parsed.size(), 64u);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(parsed.molecules[i].id, original.molecules[i].id);
    EXPECT_EQ(parsed.molecules[i], original.molecules[i]) << original.molecules[i].id;
  }
  EXPECT_EQ(parsed, original);
  EXPECT_EQ(serialize_dataset(parsed), serialize_dataset(original));
}

TEST(Parse, FileRoundTrip) {
  SyntheticOptions opt;
  opt.num_molecules = 5;
  const Dataset original = make_synthetic_dataset(opt);
  const auto    path     = std::filesystem::temp_directory_path() / "infomax3d_molgraph_test.mol";
  write_dataset(path, original);
  EXPECT_EQ(parse_dataset(path), original);
  std::filesystem::remove(path);
}

MolecularGraph propane_like() {
  MolecularGraph g;
  g.id    = "p";
  g.atoms = {Atom{6, 0, 0}, Atom{6, 0, 0}, Atom{8, -1, 0}};
  g.bonds = {Bond{0, 1, BondOrder::kSingle}, Bond{1, 2, BondOrder::kDouble}};
  g.recompute_degrees();
  return g;
}

TEST(Featurize, OneHotLayout) {
  const auto g = featurize(propane_like());
  ASSERT_TRUE(g.featurized());
  EXPECT_EQ(g.atom_features.cols(), 50u);
  EXPECT_EQ(kAtomFeatureDim, 37u + 7u + 6u);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0.0;
    for (double v : g.atom_features.row_span(i)) s += v;
    EXPECT_EQ(s, 3.0);
  }
  // Middle carbon: Z=6, degree 2, charge 0.
  EXPECT_EQ(g.atom_features(1, 5), 1.0);
  EXPECT_EQ(g.atom_features(1, 37 + 2), 1.0);
  EXPECT_EQ(g.atom_features(1, 44 + 2), 1.0);
  // Oxygen with charge -1.
  EXPECT_EQ(g.atom_features(2, 44 + 1), 1.0);
  EXPECT_EQ(g.bond_features(0, 0), 1.0);
  EXPECT_EQ(g.bond_features(1, 1), 1.0);
}

TEST(Featurize, OtherBuckets) {
  MolecularGraph g;
  g.id    = "x";
  g.atoms = {Atom{53, 3, 0}};
  for (int i = 0; i < 7; ++i) {
    g.atoms.push_back(Atom{1, 0, 0});
    g.bonds.push_back(Bond{0, static_cast<std::size_t>(i + 1), BondOrder::kSingle});
  }
  g.recompute_degrees();
  const auto f = featurize(g);
  EXPECT_EQ(f.atom_features(0, 36), 1.0);
  EXPECT_EQ(f.atom_features(0, 37 + 6), 1.0);
  EXPECT_EQ(f.atom_features(0, 44 + 5), 1.0);
}

MolecularGraph permute_graph(const MolecularGraph& g, const std::vector<std::size_t>& perm) {
  // perm[old] = new
  MolecularGraph out;
  out.id = g.id;
  out.atoms.resize(g.atoms.size());
  for (std::size_t i = 0; i < g.atoms.size(); ++i) out.atoms[perm[i]] = g.atoms[i];
  for (const auto& b : g.bonds) out.bonds.push_back(Bond{perm[b.u], perm[b.v], b.order});
  out.recompute_degrees();
  return out;
}

TEST(Featurize, PermutationEquivariant) {
  SyntheticOptions opt;
  opt.num_molecules = 10;
  std::mt19937_64 rng(2);
  for (const auto& g : make_synthetic_dataset(opt).molecules) {
    const auto perm = random_permutation(g.num_atoms(), rng);
    const auto a    = featurize(g);
    const auto b    = featurize(permute_graph(g, perm));
    for (std::size_t i = 0; i < g.num_atoms(); ++i) {
      for (std::size_t k = 0; k < kAtomFeatureDim; ++k) EXPECT_EQ(a.atom_features(i, k), b.atom_features(perm[i], k));
    }
    EXPECT_EQ(a.bond_features, b.bond_features);
  }
}

Dataset ten_molecules() {
  SyntheticOptions opt;
  opt.num_molecules = 10;
  return make_synthetic_dataset(opt);
}

TEST(Split, TenMoleculeSizes) {
  const auto s = split_random(ten_molecules(), {0.8, 0.1, 0.1}, 7);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.val.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, DeterministicDisjointExhaustive) {
  SyntheticOptions opt;
  opt.num_molecules = 37;
  const Dataset ds = make_synthetic_dataset(opt);
  const auto    a  = split_random(ds, {0.6, 0.2, 0.2}, 99);
  const auto    b  = split_random(ds, {0.6, 0.2, 0.2}, 99);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.test, b.test);

  std::multiset<std::string> ids;
  for (const Dataset* part : {&a.train, &a.val, &a.test}) {
    for (const auto& g : part->molecules) ids.insert(g.id);
  }
  std::multiset<std::string> expected;
  for (const auto& g : ds.molecules) expected.insert(g.id);
  EXPECT_EQ(ids, expected);
  EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), ids.size());

  const auto stats = compute_target_stats(a.train);
  EXPECT_EQ(a.test.target_stats, stats);
  EXPECT_NE(split_random(ds, {0.6, 0.2, 0.2}, 100).train, a.train);
}

TEST(Split, TrainStatistics) {
  const auto s = split_random(ten_molecules(), {0.8, 0.1, 0.1}, 7);
  double     m = 0.0;
  for (const auto& g : s.train.molecules) m += g.targets[0];
  m /= 8.0;
  double v = 0.0;
  for (const auto& g : s.train.molecules) v += (g.targets[0] - m) * (g.targets[0] - m);
  EXPECT_NEAR(s.val.target_stats[0].mean, m, 1e-12);
  EXPECT_NEAR(s.val.target_stats[0].stddev, std::sqrt(v / 8.0), 1e-12);
}

TEST(Split, Errors) {
  EXPECT_THROW(split_random(ten_molecules(), {0.9, 0.05, 0.05}, 1), std::invalid_argument);
  EXPECT_THROW(split_random(ten_molecules(), {0.8, 0.1, 0.2}, 1), std::invalid_argument);
  EXPECT_THROW(split_random(ten_molecules(), {1.0, 0.0, 0.0}, 1), std::invalid_argument);
}

TEST(NodeDrop, ZeroRatioIsIdentity) {
  std::mt19937_64 rng(0);
  const auto      g = featurize(ten_molecules().molecules[3]);
  EXPECT_EQ(node_drop(g, 0.0, rng), g);
}

TEST(NodeDrop, RemovesAtomsBondsAndConformerRows) {
  SyntheticOptions opt;
  opt.num_molecules = 20;
  opt.min_atoms     = 10;
  opt.max_atoms     = 10;
  std::mt19937_64 rng(8);
  for (const auto& raw : make_synthetic_dataset(opt).molecules) {
    const auto g   = featurize(raw);
    const auto out = node_drop(g, 0.2, rng);
    ASSERT_EQ(out.num_atoms(), 8u);
    EXPECT_NO_THROW(out.validate());
    EXPECT_TRUE(out.featurized());

    // Recover the surviving original indices from the (distinct) coordinates.
    const Tensor&            c0 = (*g.conformers)[0].coords;
    const Tensor&            d0 = (*out.conformers)[0].coords;
    std::vector<std::size_t> origin(8);
    for (std::size_t i = 0; i < 8; ++i) {
      std::size_t hits = 0;
      for (std::size_t j = 0; j < 10; ++j) {
        if (c0(j, 0) == d0(i, 0) && c0(j, 1) == d0(i, 1) && c0(j, 2) == d0(i, 2)) {
          origin[i] = j;
          ++hits;
        }
      }
      ASSERT_EQ(hits, 1u);
      EXPECT_EQ(out.atoms[i].atomic_number, g.atoms[origin[i]].atomic_number);
    }
    EXPECT_TRUE(std::is_sorted(origin.begin(), origin.end()));
    for (std::size_t j = 0; j < out.conformers->size(); ++j) {
      const auto    d = pairwise_distances((*out.conformers)[j]).values;
      const Tensor& x = (*g.conformers)[j].coords;
      for (std::size_t u = 0; u < 8; ++u) {
        for (std::size_t v = 0; v < 8; ++v) {
          double s = 0.0;
          for (std::size_t k = 0; k < 3; ++k) {
            s += (x(origin[u], k) - x(origin[v], k)) * (x(origin[u], k) - x(origin[v], k));
          }
          EXPECT_EQ(d(u, v), std::sqrt(s));
        }
      }
    }
    std::size_t kept_bonds = 0;
    for (const auto& b : g.bonds) {
      const auto iu = std::find(origin.begin(), origin.end(), b.u);
      const auto iv = std::find(origin.begin(), origin.end(), b.v);
      if (iu != origin.end() && iv != origin.end()) {
        ++kept_bonds;
        const Bond expect{static_cast<std::size_t>(iu - origin.begin()), static_cast<std::size_t>(iv - origin.begin()),
                          b.order};
        EXPECT_NE(std::find(out.bonds.begin(), out.bonds.end(), expect), out.bonds.end());
      }
    }
    EXPECT_EQ(out.bonds.size(), kept_bonds);
  }
}

TEST(NodeDrop, InvalidRatio) {
  std::mt19937_64 rng(0);
  const auto      g = ten_molecules().molecules[0];
  EXPECT_THROW(node_drop(g, 1.0, rng), std::invalid_argument);
  EXPECT_THROW(node_drop(g, -0.1, rng), std::invalid_argument);
}

TEST(Synthetic, DeterministicAndValid) {
  SyntheticOptions opt;
  opt.num_molecules = 30;
  opt.seed          = 5;
  const auto a      = make_synthetic_dataset(opt);
  EXPECT_EQ(a, make_synthetic_dataset(opt));
  for (const auto& g : a.molecules) {
    EXPECT_NO_THROW(g.validate());
    ASSERT_TRUE(g.conformers);
    EXPECT_EQ(g.conformers->size(), 3u);
    EXPECT_EQ(*(*g.conformers)[0].energy, 0.0);
    const auto d = pairwise_distances((*g.conformers)[0]).values;
    double     s = 0.0;
    for (std::size_t u = 0; u < g.num_atoms(); ++u) {
      for (std::size_t v = u + 1; v < g.num_atoms(); ++v) s += d(u, v);
    }
    const double pairs = static_cast<double>(g.num_atoms() * (g.num_atoms() - 1)) / 2.0;
    EXPECT_NEAR(g.targets[0], s / pairs, 1e-12);
    for (const auto& b : g.bonds) EXPECT_GT(d(b.u, b.v), 1.0);
  }
}

TEST(Synthetic, GeometryDependsOnTheGraphOnly) {
  SyntheticOptions opt;
  opt.num_molecules = 40;
  opt.seed          = 9;
  std::mt19937_64 rng(2);
  for (const auto& g : make_synthetic_dataset(opt).molecules) {
    const auto     perm = infomax3d::testing::random_permutation(g.num_atoms(), rng);
    MolecularGraph h;
    h.atoms.resize(g.num_atoms());
    for (std::size_t i = 0; i < g.num_atoms(); ++i) h.atoms[perm[i]] = g.atoms[i];
    for (const auto& b : g.bonds) h.bonds.push_back(Bond{perm[b.v], perm[b.u], b.order});
    std::shuffle(h.bonds.begin(), h.bonds.end(), rng);
    h.recompute_degrees();
    const auto dg = pairwise_distances(synthetic_geometry(g)).values;
    const auto dh = pairwise_distances(synthetic_geometry(h)).values;
    EXPECT_NEAR(max_abs_diff(dg, pairwise_distances((*g.conformers)[0]).values), 0.0, 1e-12);
    // Relabelled distance matrices agree entry by entry.
    double worst = 0.0;
    for (std::size_t u = 0; u < g.num_atoms(); ++u) {
      for (std::size_t v = 0; v < g.num_atoms(); ++v) worst = std::max(worst, std::abs(dg(u, v) - dh(perm[u], perm[v])));
    }
    EXPECT_LT(worst, 1e-9) << g.id;
  }
}

TEST(Synthetic, GeometryRejectsNonTrees) {
  MolecularGraph ring;
  for (int i = 0; i < 3; ++i) ring.atoms.push_back(Atom{6, 0, 0});
  ring.bonds = {Bond{0, 1}, Bond{1, 2}, Bond{2, 0}};
  EXPECT_THROW(synthetic_geometry(ring), std::invalid_argument);
}

}  // namespace
}  // namespace infomax3d
