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

#include "infomax3d/net2d.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "infomax3d/synthetic.hpp"
#include "test_util.hpp"

namespace infomax3d {
namespace {

using infomax3d::testing::random_permutation;
using infomax3d::testing::random_tensor;

Net2DConfig small_config() {
  Net2DConfig c;
  c.depth = 2;
  c.d_h   = 6;
  c.d_z   = 4;
  return c;
}

MolecularGraph make_graph(std::vector<int> elements, std::vector<Bond> bonds, const std::string& id = "g") {
  MolecularGraph g;
  g.id = id;
  for (int z : elements) g.atoms.push_back(Atom{z, 0, 0});
  g.bonds = std::move(bonds);
  g.recompute_degrees();
  return featurize(g);
}

MolecularGraph permute_graph(const MolecularGraph& g, const std::vector<std::size_t>& perm, std::mt19937_64& rng) {
  MolecularGraph out;
  out.id = g.id;
  out.atoms.resize(g.atoms.size());
  for (std::size_t i = 0; i < g.atoms.size(); ++i) out.atoms[perm[i]] = g.atoms[i];
  for (const auto& b : g.bonds) {
    // Also flip the stored endpoint order at random.
    out.bonds.push_back(rng() % 2 ? Bond{perm[b.u], perm[b.v], b.order} : Bond{perm[b.v], perm[b.u], b.order});
  }
  std::shuffle(out.bonds.begin(), out.bonds.end(), rng);
  out.recompute_degrees();
  return featurize(out);
}

// relu(x W + b) evaluated with plain loops.
std::vector<double> affine_relu(const std::vector<double>& x, const Tensor& w, const Tensor& b, bool relu = true) {
  std::vector<double> out(w.cols());
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double s = b(0, j);
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w(i, j);
    out[j] = relu ? std::max(s, 0.0) : s;
  }
  return out;
}

TEST(Net2DConfig, Validation) {
  Net2DConfig c = small_config();
  c.depth       = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c             = small_config();
  c.aggregators = {};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c         = small_config();
  c.scalers = {};
  EXPECT_THROW(Net2D(c, 0), std::invalid_argument);
  EXPECT_EQ(parse_scaler("attenuation"), Scaler::kAttenuation);
  EXPECT_THROW(parse_scaler("linear"), std::invalid_argument);
}

TEST(Net2D, GlorotInitBounds) {
  Net2D        net(small_config(), 3);
  const auto&  w     = net.params().at("net2d.node_enc.weight").value;
  const double bound = std::sqrt(6.0 / (50.0 + 6.0));
  for (double v : w.data()) EXPECT_LE(std::abs(v), bound);
  for (double v : net.params().at("net2d.node_enc.bias").value.data()) EXPECT_EQ(v, 0.0);
}

// Runs one layer without residual and batch norm and returns its output.
Tensor run_layer(Net2D& net, const MolecularGraph& g, const Tensor& h_in) {
  const MolecularGraph* gs[]  = {&g};
  const GraphBatch      batch = make_graph_batch(gs);
  ad::Tape              tape;
  const ad::Var         e = nn::linear(tape, net.params(), "net2d.edge_enc", tape.constant(batch.edge_features));
  return net.layer(tape, batch, 0, tape.constant(h_in), e, nn::Mode{}).value();
}

TEST(Net2DLayer, SingleNodeSeesZeroAggregate) {
  Net2DConfig c = small_config();
  c.residual    = false;
  c.batch_norm  = false;
  Net2D           net(c, 1);
  std::mt19937_64 rng(1);
  const Tensor    h   = random_tensor(1, 6, rng);
  const Tensor    out = run_layer(net, make_graph({6}, {}), h);
  std::vector<double> x(h.data().begin(), h.data().end());
  x.resize(6 + 4 * 3 * 6, 0.0);
  const auto expect = affine_relu(x, net.params().at("net2d.layer0.upd.0.weight").value,
                                  net.params().at("net2d.layer0.upd.0.bias").value);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(out(0, j), expect[j], 1e-14);
}

TEST(Net2DLayer, StarWithIdenticalLeavesHasZeroStd) {
  Net2DConfig c = small_config();
  c.residual    = false;
  c.batch_norm  = false;
  c.aggregators = {nn::Aggregator::kStd};
  Net2D                net(c, 2);
  const MolecularGraph star = make_graph({6, 8, 8, 8}, {{0, 1}, {0, 2}, {0, 3}});
  std::mt19937_64      rng(2);
  Tensor               h = random_tensor(4, 6, rng);
  for (std::size_t r = 2; r < 4; ++r) {
    for (std::size_t k = 0; k < 6; ++k) h(r, k) = h(1, k);
  }
  const Tensor out = run_layer(net, star, h);
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> x(h.row_span(i).begin(), h.row_span(i).end());
    x.resize(6 + 3 * 6, 0.0);
    const auto expect = affine_relu(x, net.params().at("net2d.layer0.upd.0.weight").value,
                                    net.params().at("net2d.layer0.upd.0.bias").value);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(out(i, j), expect[j], 1e-12) << "node " << i;
  }
}

TEST(Net2DLayer, SumIdentityIsVanillaMessagePassing) {
  Net2DConfig c = small_config();
  c.residual    = false;
  c.batch_norm  = false;
  c.aggregators = {nn::Aggregator::kSum};
  c.scalers     = {Scaler::kIdentity};
  Net2D                net(c, 4);
  const MolecularGraph g = make_graph({6, 7, 8, 6}, {{0, 1, BondOrder::kDouble}, {1, 2}, {1, 3}});
  std::mt19937_64      rng(4);
  const Tensor         h   = random_tensor(4, 6, rng);
  const Tensor         out = run_layer(net, g, h);

  const auto& p = net.params();
  const auto  edge_embedding = [&](std::size_t k) {
    return affine_relu(std::vector<double>(g.bond_features.row_span(k).begin(), g.bond_features.row_span(k).end()),
                       p.at("net2d.edge_enc.weight").value, p.at("net2d.edge_enc.bias").value, false);
  };
  std::vector<std::vector<double>> agg(4, std::vector<double>(6, 0.0));
  for (std::size_t k = 0; k < g.bonds.size(); ++k) {
    const auto e = edge_embedding(k);
    for (auto [u, v] : {std::pair{g.bonds[k].u, g.bonds[k].v}, std::pair{g.bonds[k].v, g.bonds[k].u}}) {
      std::vector<double> x(h.row_span(u).begin(), h.row_span(u).end());
      x.insert(x.end(), h.row_span(v).begin(), h.row_span(v).end());
      x.insert(x.end(), e.begin(), e.end());
      const auto hidden = affine_relu(x, p.at("net2d.layer0.msg.0.weight").value, p.at("net2d.layer0.msg.0.bias").value);
      const auto m = affine_relu(hidden, p.at("net2d.layer0.msg.1.weight").value, p.at("net2d.layer0.msg.1.bias").value,
                                 false);
      for (std::size_t j = 0; j < 6; ++j) agg[u][j] += m[j];
    }
  }
  for (std::size_t u = 0; u < 4; ++u) {
    std::vector<double> x(h.row_span(u).begin(), h.row_span(u).end());
    x.insert(x.end(), agg[u].begin(), agg[u].end());
    const auto expect = affine_relu(x, p.at("net2d.layer0.upd.0.weight").value, p.at("net2d.layer0.upd.0.bias").value);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(out(u, j), expect[j], 1e-12);
  }
}

TEST(Net2DLayer, DegreeScalers) {
  Net2DConfig c = small_config();
  c.residual    = false;
  c.batch_norm  = false;
  c.aggregators = {nn::Aggregator::kMean};
  Net2D net(c, 5);
  net.set_degree_delta(0.5);
  const MolecularGraph g = make_graph({6, 6, 6, 6}, {{0, 1}, {0, 2}, {0, 3}});
  std::mt19937_64      rng(5);
  const Tensor         h = random_tensor(4, 6, rng);

  // Reference: identity-only layer gives the mean aggregate via an update
  // weight that copies it; instead compare against explicitly scaled inputs.
  const MolecularGraph* gs[]  = {&g};
  const GraphBatch      batch = make_graph_batch(gs);
  EXPECT_EQ(batch.degree, (std::vector<double>{3, 1, 1, 1}));
  ad::Tape      tape;
  const ad::Var e   = nn::linear(tape, net.params(), "net2d.edge_enc", tape.constant(batch.edge_features));
  const ad::Var out = net.layer(tape, batch, 0, tape.constant(h), e, nn::Mode{});
  // The update input for node 0 is (h | mean | mean*log4/0.5 | mean*0.5/log4);
  // recover it from the concatenation node recorded just before the update.
  bool found = false;
  for (std::size_t id = 0; id < tape.size(); ++id) {
    const Tensor& v = tape.value(id);
    if (v.rows() == 4 && v.cols() == 6 + 3 * 6) {
      found = true;
      for (std::size_t j = 0; j < 6; ++j) {
        const double mean = v(0, 6 + j);
        EXPECT_NEAR(v(0, 12 + j), mean * std::log(4.0) / 0.5, 1e-14);
        EXPECT_NEAR(v(0, 18 + j), mean * 0.5 / std::log(4.0), 1e-14);
        EXPECT_NEAR(v(1, 12 + j), v(1, 6 + j) * std::log(2.0) / 0.5, 1e-14);
      }
    }
  }
  EXPECT_TRUE(found);
  EXPECT_EQ(out.rows(), 4u);
}

TEST(Net2DReadout, OneNodeAndTwoNodeHandComputation) {
  Net2DConfig c        = small_config();
  c.readout_mlp_layers = 1;
  Net2D                net(c, 6);
  const MolecularGraph g = make_graph({6, 8}, {{0, 1}});
  const MolecularGraph* gs[]  = {&g};
  const GraphBatch      batch = make_graph_batch(gs);
  const Tensor          h = Tensor::from_rows({{1, -2, 3, 0, 5, -1}, {4, 2, -3, 0, -5, 1}});
  ad::Tape              tape;
  const Tensor          z = net.readout(tape, batch, tape.constant(h)).value();
  std::vector<double>   pooled;
  for (std::size_t j = 0; j < 6; ++j) pooled.push_back((h(0, j) + h(1, j)) / 2);
  for (std::size_t j = 0; j < 6; ++j) pooled.push_back(std::max(h(0, j), h(1, j)));
  for (std::size_t j = 0; j < 6; ++j) pooled.push_back(std::min(h(0, j), h(1, j)));
  for (std::size_t j = 0; j < 6; ++j) pooled.push_back(h(0, j) + h(1, j));
  const auto expect = affine_relu(pooled, net.params().at("net2d.readout.0.weight").value,
                                  net.params().at("net2d.readout.0.bias").value, false);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(z(0, j), expect[j], 1e-12);

  const MolecularGraph  one    = make_graph({6}, {});
  const MolecularGraph* ones[] = {&one};
  const GraphBatch      b1     = make_graph_batch(ones);
  ad::Tape              t1;
  const Tensor          row = Tensor::from_rows({{1, 2, 3, 4, 5, 6}});
  const ad::Var         p1  = nn::pool(t1.constant(row), b1.graph_nodes, c.readout_aggregators);
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(p1.value()(0, a * 6 + j), row(0, j));
  }
}

TEST(Net2D, EncodeIsDeterministicAndShaped) {
  Net2DConfig c = small_config();
  Net2D       net(c, 7);
  SyntheticOptions opt;
  opt.num_molecules = 3;
  auto ds           = make_synthetic_dataset(opt);
  featurize_all(ds);
  const Tensor a = net.encode(ds.molecules[0]);
  EXPECT_EQ(a.rows(), 1u);
  EXPECT_EQ(a.cols(), 4u);
  EXPECT_EQ(a, net.encode(ds.molecules[0]));
  MolecularGraph raw = ds.molecules[0];
  raw.atom_features  = Tensor();
  EXPECT_THROW(net.encode(raw), std::invalid_argument);

  c.num_outputs = 3;
  EXPECT_EQ(Net2D(c, 7).encode(ds.molecules[1]).cols(), 12u);
}

TEST(Net2D, PermutationInvariantExactly) {
  Net2D            net(small_config(), 8);
  SyntheticOptions opt;
  opt.num_molecules = 12;
  auto ds           = make_synthetic_dataset(opt);
  featurize_all(ds);
  net.set_degree_delta(estimate_degree_delta(ds));
  // Move batch-norm statistics away from their initial values.
  {
    std::vector<const MolecularGraph*> gs;
    for (const auto& g : ds.molecules) gs.push_back(&g);
    const GraphBatch batch = make_graph_batch(gs);
    std::mt19937_64  r(0);
    for (int i = 0; i < 3; ++i) {
      ad::Tape tape;
      net.forward(tape, batch, nn::Mode{true, &r});
    }
  }
  std::mt19937_64 rng(8);
  for (const auto& g : ds.molecules) {
    const Tensor z = net.encode(g);
    for (int k = 0; k < 5; ++k) {
      const auto perm = random_permutation(g.num_atoms(), rng);
      EXPECT_EQ(net.encode(permute_graph(g, perm, rng)), z) << g.id;
    }
  }
}

TEST(Net2D, NodeStatesArePermutationEquivariant) {
  Net2D            net(small_config(), 9);
  SyntheticOptions opt;
  opt.num_molecules = 1;
  auto ds           = make_synthetic_dataset(opt);
  featurize_all(ds);
  const auto&           g    = ds.molecules[0];
  std::mt19937_64       rng(9);
  const auto            perm = random_permutation(g.num_atoms(), rng);
  const MolecularGraph  pg   = permute_graph(g, perm, rng);
  const MolecularGraph* a[]  = {&g};
  const MolecularGraph* b[]  = {&pg};
  ad::Tape              ta, tb;
  const Tensor          ha = net.forward(ta, make_graph_batch(a), nn::Mode{}).nodes.value();
  const Tensor          hb = net.forward(tb, make_graph_batch(b), nn::Mode{}).nodes.value();
  for (std::size_t i = 0; i < g.num_atoms(); ++i) {
    for (std::size_t j = 0; j < ha.cols(); ++j) EXPECT_EQ(ha(i, j), hb(perm[i], j));
  }
}

TEST(Net2D, GradientCheckThroughEncoder) {
  Net2DConfig      c = small_config();
  Net2D            net(c, 10);
  SyntheticOptions opt;
  opt.num_molecules = 3;
  auto ds           = make_synthetic_dataset(opt);
  featurize_all(ds);
  std::vector<const MolecularGraph*> gs;
  for (const auto& g : ds.molecules) gs.push_back(&g);
  const GraphBatch batch = make_graph_batch(gs);
  std::mt19937_64  rng(10);
  const Tensor     head = random_tensor(3, 4, rng);
  const auto       f    = [&](ad::Tape& tape, ad::ParamStore&) {
    const ad::Var z = net.forward(tape, batch, nn::Mode{true, nullptr}).z;
    return ad::sum_all(ad::mul(ad::sigmoid(z), tape.constant(head)));
  };
  const auto r = ad::check_gradients(f, net.params());
  EXPECT_GE(r.checked, 200u);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst_param;
}

TEST(Net2D, DegreeDelta) {
  SyntheticOptions opt;
  opt.num_molecules = 4;
  const auto ds     = make_synthetic_dataset(opt);
  double     s      = 0.0;
  std::size_t n     = 0;
  for (const auto& g : ds.molecules) {
    for (const auto& a : g.atoms) {
      s += std::log(a.degree + 1.0);
      ++n;
    }
  }
  EXPECT_NEAR(estimate_degree_delta(ds), s / n, 1e-14);
  Net2D net(small_config(), 0);
  EXPECT_EQ(net.degree_delta(), 1.0);
  EXPECT_THROW(net.set_degree_delta(0.0), std::invalid_argument);
}

}  // namespace
}  // namespace infomax3d
