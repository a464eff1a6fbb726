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

#include "infomax3d/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

#include "infomax3d/losses.hpp"
#include "infomax3d/net2d.hpp"
#include "infomax3d/net3d.hpp"
#include "infomax3d/optim.hpp"
#include "infomax3d/synthetic.hpp"

namespace infomax3d {

namespace {

std::string sci(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor                           t(r, c);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

//! Random rotation (optionally with a reflection) and translation.
Tensor random_isometry(const Tensor& x, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double q[4];
  double norm = 0.0;
  for (double& v : q) {
    v = n(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : q) v /= norm;
  const double w = q[0], a = q[1], b = q[2], c = q[3];
  double       r[3][3] = {{1 - 2 * (b * b + c * c), 2 * (a * b - c * w), 2 * (a * c + b * w)},
                          {2 * (a * b + c * w), 1 - 2 * (a * a + c * c), 2 * (b * c - a * w)},
                          {2 * (a * c - b * w), 2 * (b * c + a * w), 1 - 2 * (a * a + b * b)}};
  if (rng() % 2) {
    for (auto& row : r) row[0] = -row[0];
  }
  const double t[3] = {5 * n(rng), 5 * n(rng), 5 * n(rng)};
  Tensor       out(x.rows(), 3);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (int k = 0; k < 3; ++k) {
      out(i, k) = t[k] + r[k][0] * x(i, 0) + r[k][1] * x(i, 1) + r[k][2] * x(i, 2);
    }
  }
  return out;
}

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

//! Atom i of g becomes atom perm[i]; bonds are reversed and shuffled.
MolecularGraph permute(const MolecularGraph& g, const std::vector<std::size_t>& perm, Rng& rng) {
  MolecularGraph out;
  out.id = g.id;
  out.atoms.resize(g.num_atoms());
  for (std::size_t i = 0; i < g.num_atoms(); ++i) out.atoms[perm[i]] = g.atoms[i];
  for (const auto& b : g.bonds) out.bonds.push_back(Bond{perm[b.v], perm[b.u], b.order});
  std::shuffle(out.bonds.begin(), out.bonds.end(), rng);
  out.recompute_degrees();
  return featurize(out);
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(perm[i], j) = x(i, j);
  }
  return out;
}

class Suite {
 public:
  void check(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    try {
      auto [ok, detail] = body();
      results_.push_back({name, ok, detail});
    } catch (const std::exception& e) {
      results_.push_back({name, false, std::string("threw: ") + e.what()});
    }
  }
  std::vector<PropertyResult> take() { return std::move(results_); }

 private:
  std::vector<PropertyResult> results_;
};

std::pair<bool, std::string> grad_result(const ad::GradCheckResult& r) {
  return {r.max_rel_error <= 1e-4 && r.checked > 0,
          "max rel error " + sci(r.max_rel_error) + " over " + std::to_string(r.checked) + " coordinates"};
}

}  // namespace

std::vector<PropertyResult> run_selftest(std::uint64_t seed) {
  Suite            suite;
  Rng              rng(seed);
  SyntheticOptions opt;
  opt.num_molecules = 12;
  opt.seed          = seed;
  Dataset ds        = make_synthetic_dataset(opt);
  featurize_all(ds);

  Net2DConfig c2;
  c2.depth = 2;
  c2.d_h   = 8;
  c2.d_z   = 8;
  Net3DConfig c3;
  c3.d_h = 6;
  c3.d_d = 6;
  c3.d_z = 8;
  Net2D net2d(c2, seed);
  Net3D net3d(c3, seed + 1);

  suite.check("encode3d_isometry_invariance", [&] {
    double worst = 0.0;
    for (const auto& m : ds.molecules) {
      const Tensor& x  = m.conformers->lowest_energy().coords;
      const Tensor  z0 = net3d.encode(x);
      for (int k = 0; k < 3; ++k) worst = std::max(worst, max_abs_diff(z0, net3d.encode(random_isometry(x, rng))));
    }
    return std::pair{worst <= 1e-9, "max |dz| " + sci(worst) + " (tolerance 1e-9)"};
  });
  suite.check("encode3d_permutation_invariance", [&] {
    double worst = 0.0;
    for (const auto& m : ds.molecules) {
      const Tensor& x = m.conformers->lowest_energy().coords;
      const auto    p = random_permutation(x.rows(), rng);
      worst           = std::max(worst, max_abs_diff(net3d.encode(x), net3d.encode(permute_rows(x, p))));
    }
    return std::pair{worst <= 1e-9, "max |dz| " + sci(worst) + " (tolerance 1e-9)"};
  });
  suite.check("encode2d_permutation_invariance", [&] {
    std::size_t differing = 0;
    for (const auto& m : ds.molecules) {
      const auto p = random_permutation(m.num_atoms(), rng);
      if (!(net2d.encode(m) == net2d.encode(permute(m, p, rng)))) ++differing;
    }
    return std::pair{differing == 0, std::to_string(differing) + " molecules differ (exact equality required)"};
  });

  suite.check("loss_closed_forms", [&] {
    ad::Tape     t;
    const auto   e = t.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
    const double a = ntxent_eq1(e, e, 0.1).value().item();
    const auto   s = t.constant(Tensor::from_rows({{1, 2}, {1, 2}, {1, 2}}));
    const double b = ntxent_eq1(s, s, 0.5).value().item();
    const double err = std::max(std::abs(a + 10.0), std::abs(b - std::log(2.0)));
    return std::pair{err <= 1e-9, "aligned/orthogonal " + std::to_string(a) + ", identical " + std::to_string(b)};
  });
  suite.check("loss_reduction_identity", [&] {
    double worst1 = 0.0, worst2 = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n  = 2 + rng() % 7;
      const Tensor      za = random_matrix(n, 5, rng), zb = random_matrix(n, 5, rng);
      Tensor            dup(2 * n, 5);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 5; ++j) dup(2 * i, j) = dup(2 * i + 1, j) = zb(i, j);
      }
      ad::Tape     t;
      const auto   a  = t.constant(za);
      const double l1 = ntxent_eq1(a, t.constant(zb), 0.1).value().item();
      const double lc = multi3d_eq2(a, t.constant(zb), 1, 0.1).value().item();
      const double l2 = multi3d_eq2(a, t.constant(dup), 2, 0.1).value().item();
      worst1          = std::max(worst1, std::abs(l1 - lc));
      worst2          = std::max(worst2, std::abs(l2 - lc));
    }
    return std::pair{worst1 <= 1e-12 && worst2 <= 1e-9,
                     "c=1 vs eq1 " + sci(worst1) + ", duplicated c=2 vs c=1 " + sci(worst2)};
  });
  suite.check("loss_scale_invariance", [&] {
    const Tensor za = random_matrix(5, 4, rng), zb = random_matrix(5, 4, rng);
    Tensor       za2 = za, zb2 = zb;
    for (auto& v : za2.data()) v *= 3.7;
    for (auto& v : zb2.data()) v *= 0.2;
    ad::Tape     t;
    const double a = ntxent_eq1(t.constant(za), t.constant(zb), 0.1).value().item();
    const double b = ntxent_eq1(t.constant(za2), t.constant(zb2), 0.1).value().item();
    return std::pair{std::abs(a - b) <= 1e-9, "difference " + sci(std::abs(a - b))};
  });

  std::vector<const MolecularGraph*> graphs;
  std::vector<const Tensor*>         clouds;
  for (std::size_t i = 0; i < 4; ++i) {
    graphs.push_back(&ds.molecules[i]);
    clouds.push_back(&ds.molecules[i].conformers->lowest_energy().coords);
  }
  const GraphBatch      gb = make_graph_batch(graphs);
  const PointCloudBatch pb = make_point_cloud_batch(clouds, c3.frequencies);
  const Tensor          zb_fixed = random_matrix(4, c2.d_z, rng);
  const Tensor          za_fixed = random_matrix(4, c3.d_z, rng);

  suite.check("gradient_encode2d", [&] {
    return grad_result(ad::check_gradients(
        [&](ad::Tape& t, ad::ParamStore&) {
          return ntxent_eq1(net2d.forward(t, gb, nn::Mode{true, nullptr}).z, t.constant(zb_fixed), 0.1);
        },
        net2d.params()));
  });
  suite.check("gradient_encode3d", [&] {
    return grad_result(ad::check_gradients(
        [&](ad::Tape& t, ad::ParamStore&) {
          return ntxent_eq1(t.constant(za_fixed), net3d.forward(t, pb, nn::Mode{true, nullptr}), 0.1);
        },
        net3d.params()));
  });
  for (LossKind kind : {LossKind::kNtXentEq1, LossKind::kMulti3dEq2, LossKind::kMulti2dSimAll, LossKind::kMulti2dSimMax}) {
    suite.check(std::string("gradient_loss_") + std::string(to_string(kind)), [&] {
      LossConfig cfg;
      cfg.kind = kind;
      cfg.c    = kind == LossKind::kNtXentEq1 ? 1 : 3;
      const bool        multi2d = kind == LossKind::kMulti2dSimAll || kind == LossKind::kMulti2dSimMax;
      const std::size_t n = 5, rows_a = multi2d ? n * 3 : n;
      ad::ParamStore    store;
      store.add("za", random_matrix(rows_a, 8, rng));
      store.add("zb", random_matrix(cfg.kind == LossKind::kNtXentEq1 ? n : n * 3, 8, rng));
      return grad_result(ad::check_gradients(
          [&](ad::Tape& t, ad::ParamStore& s) { return contrastive_loss(cfg, t.param(s, "za"), t.param(s, "zb")); },
          store));
    });
  }
  suite.check("gradient_distance_head", [&] {
    DistanceHead head(6, seed);
    head.params().add("h", random_matrix(5, 6, rng));
    const auto   pairs  = upper_pairs(5);
    Tensor       target = random_matrix(pairs.size(), 1, rng);
    for (auto& v : target.data()) v = 1.0 + std::abs(v);
    return grad_result(ad::check_gradients(
        [&](ad::Tape& t, ad::ParamStore& s) { return distance_mse(head.forward(t, t.param(s, "h"), pairs), target); },
        head.params()));
  });
  suite.check("gradient_negative_control", [&] {
    ad::ParamStore store;
    store.add("x", random_matrix(4, 4, rng));
    const auto r = ad::check_gradients(
        [](ad::Tape& t, ad::ParamStore& s) {
          const ad::Var x  = t.param(s, "x");
          Tensor        sq = x.value();
          for (auto& v : sq.data()) v *= v;
          const ad::Var parents[] = {x};
          const ad::Var bad       = t.record(std::move(sq), parents, [x](ad::Tape& tape, const Tensor& g) {
            Tensor dx = tape.value(x.id());
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= 2.2 * g[i];
            tape.accumulate(x, dx);
          });
          return ad::sum_all(bad);
        },
        store);
    return std::pair{r.max_rel_error > 1e-4, "corrupted gradient flagged with rel error " + sci(r.max_rel_error)};
  });

  suite.check("gamma_encoding", [&] {
    double worst = 0.0;
    bool   sizes = true;
    for (int f : {0, 3, 4, 8, 10, 50}) {
      sizes = sizes && gamma_encode(1.0, f).size() == static_cast<std::size_t>(2 * f + 1);
      const auto g0 = gamma_encode(0.0, f);
      const auto gp = gamma_encode(std::numbers::pi, f);
      worst         = std::max({worst, std::abs(g0[0]), std::abs(gp[0] - std::numbers::pi)});
      for (int k = 0; k < f; ++k) {
        const double x = std::numbers::pi / std::ldexp(1.0, k);
        worst          = std::max({worst, std::abs(g0[1 + 2 * k]), std::abs(g0[2 + 2 * k] - 1.0),
                                   std::abs(gp[1 + 2 * k] - std::sin(x)), std::abs(gp[2 + 2 * k] - std::cos(x))});
      }
    }
    return std::pair{sizes && worst <= 1e-12, "lengths 2F+1 " + std::string(sizes ? "ok" : "wrong") +
                                                  ", closed-form error " + sci(worst)};
  });
  suite.check("schedule_constants", [&] {
    auto pre  = LrSchedule::pretraining(8e-5, 700, PlateauOptions{0.6, 25, 20});
    bool ok   = pre.lr(350, 0) == 4e-5 && pre.lr(700, 0) == 8e-5;
    int  fire = -1;
    pre.plateau_step(700, 1.0);
    for (int i = 1; i <= 30 && fire < 0; ++i) {
      if (pre.plateau_step(700, 1.0)) fire = i;
    }
    ok = ok && fire == 26 && std::abs(pre.lr(700, 0) - 4.8e-5) <= 1e-18;
    const std::size_t lengths[] = {700, 700, 350};
    auto              ft        = LrSchedule::sequential(7e-5, lengths, PlateauOptions{0.5, 25, 20});
    ok = ok && ft.lr(699, 1) == 0.0 && ft.lr(700, 0) == 7e-5 && ft.lr(1399, 2) == 0.0 && ft.lr(1750, 2) == 7e-5;
    return std::pair{ok, "warmup midpoint, reduction after 26 non-improving evaluations, three-group ramp order"};
  });
  suite.check("conformer_rules", [&] {
    Tensor       a(2, 3, 0.0), b(2, 3, 1.0);
    ConformerSet set({Conformer{b, 2.0, {}}, Conformer{a, 1.0, {}}});
    const auto   sel = select_conformers(set, 3);
    const bool   pad = sel.size() == 3 && sel[0].coords == a && sel[1].coords == b && sel[2].coords == a;
    const std::vector<double> e = {0.0, 0.3, 1.1}, shifted = {5.0, 5.3, 6.1};
    const auto   w1 = boltzmann_weights(e), w2 = boltzmann_weights(shifted);
    double       d  = 0.0;
    for (std::size_t i = 0; i < 3; ++i) d = std::max(d, std::abs(w1[i] - w2[i]));
    return std::pair{pad && d <= 1e-12, std::string("padding ") + (pad ? "[E1,E2,E1]" : "wrong") +
                                            ", offset change in weights " + sci(d)};
  });
  suite.check("distance_head_symmetric_positive", [&] {
    DistanceHead head(6, seed + 7);
    const Tensor h = random_matrix(8, 6, rng);
    std::vector<std::pair<std::size_t, std::size_t>> fwd = upper_pairs(8), rev;
    for (const auto& [u, v] : fwd) rev.emplace_back(v, u);
    ad::Tape     t;
    const auto   hv = t.constant(h);
    const Tensor a  = head.forward(t, hv, fwd).value();
    const Tensor b  = head.forward(t, hv, rev).value();
    const bool   ok = a == b && std::all_of(a.data().begin(), a.data().end(), [](double v) { return v > 0.0; });
    return std::pair{ok, std::to_string(fwd.size()) + " pairs, exact symmetry and positivity"};
  });
  return suite.take();
}

}  // namespace infomax3d
