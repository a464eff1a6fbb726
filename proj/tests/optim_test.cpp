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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "infomax3d/metrics.hpp"

namespace infomax3d {
namespace {

// --- Adam --------------------------------------------------------------------

// Minimises sum(x^2) with x stored in a 1 x n parameter.
struct Quadratic {
  ad::ParamStore store;
  explicit Quadratic(std::vector<double> x0) {
    const std::size_t n = x0.size();
    store.add("x", Tensor(1, n, std::move(x0)));
  }
  Tensor& x() { return store.at("x").value; }
  void    set_grad() {
    auto& p = store.at("x");
    for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] = 2.0 * p.value[i];
  }
};

TEST(Adam, FirstStepMatchesClosedForm) {
  // With bias correction the first update is lr * g / (|g| + eps).
  Quadratic q({1.0, -3.0});
  Adam      adam;
  adam.add(q.store);
  q.set_grad();
  const double lr = 0.1;
  adam.step(std::vector<double>{lr});
  EXPECT_NEAR(q.x()[0], 1.0 - lr * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(q.x()[1], -3.0 + lr * 6.0 / (6.0 + 1e-8), 1e-15);
}

TEST(Adam, SecondStepMatchesHandComputation) {
  Quadratic q({1.0});
  Adam      adam;
  adam.add(q.store);
  const double lr = 0.05;
  double       x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    q.set_grad();
    adam.step(std::vector<double>{lr});
    const double g = 2.0 * x;
    m              = 0.9 * m + 0.1 * g;
    v              = 0.999 * v + 0.001 * g * g;
    x -= lr * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(q.x()[0], x, 1e-15) << "step " << t;
  }
  EXPECT_EQ(adam.steps(), 2u);
}

TEST(Adam, OneStepDescends) {
  Quadratic q({1.0});
  Adam      adam;
  adam.add(q.store);
  q.set_grad();
  adam.step(std::vector<double>{0.1});
  EXPECT_LT(q.x()[0], 1.0);
}

TEST(Adam, QuadraticConvergesWithin100Steps) {
  Quadratic q({1.0});
  Adam      adam;
  adam.add(q.store);
  for (int t = 0; t < 100; ++t) {
    adam.zero_grad();
    q.set_grad();
    adam.step(std::vector<double>{0.15});
  }
  EXPECT_LT(std::abs(q.x()[0]), 1e-3);
}

TEST(Adam, ZeroGradientOnlyAppliesWeightDecay) {
  Quadratic q({2.0, -4.0});
  Adam      adam(AdamOptions{.weight_decay = 0.01});
  adam.add(q.store);
  adam.step(std::vector<double>{0.5});
  EXPECT_DOUBLE_EQ(q.x()[0], 2.0 * (1.0 - 0.5 * 0.01));
  EXPECT_DOUBLE_EQ(q.x()[1], -4.0 * (1.0 - 0.5 * 0.01));

  Quadratic q2({2.0});
  Adam      plain;
  plain.add(q2.store);
  plain.step(std::vector<double>{0.5});
  EXPECT_EQ(q2.x()[0], 2.0);
}

TEST(Adam, NonFiniteGradientNamesParameterAndChangesNothing) {
  ad::ParamStore store;
  store.add("net.a", Tensor(1, 2, 1.0));
  store.add("net.b", Tensor(1, 1, 1.0));
  store.at("net.a").grad[0] = 1.0;
  store.at("net.b").grad[0] = std::nan("");
  Adam adam;
  adam.add(store);
  try {
    adam.step(std::vector<double>{0.1});
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("net.b"), std::string::npos) << e.what();
  }
  EXPECT_EQ(store.at("net.a").value[0], 1.0);
  EXPECT_EQ(adam.steps(), 0u);
}

TEST(Adam, GroupsUseTheirOwnRates) {
  ad::ParamStore a, b;
  a.add("a.w", Tensor(1, 1, 1.0));
  b.add("b.w", Tensor(1, 1, 1.0));
  a.at("a.w").grad[0] = 1.0;
  b.at("b.w").grad[0] = 1.0;
  Adam adam;
  adam.add(a, [](const std::string&) { return 0u; });
  adam.add(b, [](const std::string&) { return 1u; });
  EXPECT_EQ(adam.group_of("b.w"), 1u);
  adam.step(std::vector<double>{0.0, 0.1});
  EXPECT_EQ(a.at("a.w").value[0], 1.0);
  EXPECT_LT(b.at("b.w").value[0], 1.0);
  EXPECT_THROW(adam.step(std::vector<double>{0.1}), std::invalid_argument);
}

TEST(Adam, DuplicateNamesAcrossStoresRejected) {
  ad::ParamStore a, b;
  a.add("w", Tensor(1, 1));
  b.add("w", Tensor(1, 1));
  Adam adam;
  adam.add(a);
  EXPECT_THROW(adam.add(b), std::invalid_argument);
}

// --- schedules -----------------------------------------------------------------

TEST(Plateau, FiresOnTheTwentySixthNonImprovingEvaluation) {
  PlateauScheduler s(PlateauOptions{0.6, 25, 20});
  EXPECT_FALSE(s.step(1.0));  // sets the best
  for (int i = 1; i <= 25; ++i) EXPECT_FALSE(s.step(1.0)) << "non-improving evaluation " << i;
  EXPECT_TRUE(s.step(1.0));
  EXPECT_DOUBLE_EQ(s.multiplier(), 0.6);
  EXPECT_EQ(s.state().reductions, 1u);
}

TEST(Plateau, ImprovementResetsPatience) {
  PlateauScheduler s(PlateauOptions{0.6, 25, 20});
  s.step(1.0);
  for (int i = 0; i < 25; ++i) s.step(1.0);
  EXPECT_FALSE(s.step(0.5));  // strictly lower
  for (int i = 0; i < 25; ++i) EXPECT_FALSE(s.step(0.5));  // equal is not an improvement
  EXPECT_TRUE(s.step(0.7));
}

TEST(Plateau, CooldownSuppressesCounting) {
  PlateauScheduler s(PlateauOptions{0.6, 25, 20});
  s.step(1.0);
  std::vector<int> fired;
  for (int t = 0; t < 200; ++t) {
    if (s.step(2.0)) fired.push_back(t);
  }
  ASSERT_GE(fired.size(), 2u);
  EXPECT_EQ(fired[0], 25);
  // 20 evaluations of cooldown, then 26 counted ones.
  EXPECT_EQ(fired[1] - fired[0], 46);
  EXPECT_EQ(fired[2] - fired[1], 46);
  EXPECT_NEAR(s.multiplier(), std::pow(0.6, static_cast<double>(fired.size())), 1e-15);
}

TEST(Plateau, FactorMustBeInOpenUnitInterval) {
  EXPECT_THROW(PlateauScheduler(PlateauOptions{1.0, 1, 0}), std::invalid_argument);
  EXPECT_THROW(PlateauScheduler(PlateauOptions{0.0, 1, 0}), std::invalid_argument);
}

TEST(LrSchedule, PretrainingWarmup) {
  auto s = LrSchedule::pretraining(8e-5, 700, PlateauOptions{0.6, 25, 20});
  EXPECT_EQ(s.lr(0, 0), 0.0);
  EXPECT_EQ(s.lr(350, 0), 4e-5);
  EXPECT_EQ(s.lr(700, 0), 8e-5);
  EXPECT_EQ(s.lr(5000, 0), 8e-5);
  double prev = -1.0;
  for (std::size_t t = 0; t <= 700; ++t) {
    EXPECT_GE(s.lr(t, 0), prev);
    prev = s.lr(t, 0);
  }
}

TEST(LrSchedule, PlateauIgnoredDuringWarmupThenScales) {
  auto s = LrSchedule::pretraining(8e-5, 700, PlateauOptions{0.6, 25, 20});
  for (int i = 0; i < 100; ++i) EXPECT_FALSE(s.plateau_step(10, 1.0));
  EXPECT_EQ(s.plateau().state().num_bad, 0u);
  s.plateau_step(700, 1.0);
  bool fired = false;
  for (int i = 0; i < 26; ++i) fired = s.plateau_step(700, 1.0);
  EXPECT_TRUE(fired);
  EXPECT_NEAR(s.lr(800, 0), 4.8e-5, 1e-18);
}

TEST(LrSchedule, FinetuneGroupsRampInOrder) {
  const std::vector<std::size_t> lengths = {700, 700, 350};
  auto s = LrSchedule::sequential(7e-5, lengths, PlateauOptions{0.5, 25, 20});
  ASSERT_EQ(s.num_groups(), 3u);
  EXPECT_EQ(s.lrs(0), (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_EQ(s.lr(350, 0), 3.5e-5);
  EXPECT_EQ(s.lr(350, 1), 0.0);
  EXPECT_EQ(s.lr(700, 0), 7e-5);
  EXPECT_EQ(s.lr(700, 1), 0.0);
  EXPECT_EQ(s.lr(1050, 1), 3.5e-5);
  EXPECT_EQ(s.lr(1050, 2), 0.0);
  EXPECT_EQ(s.lr(1400, 1), 7e-5);
  EXPECT_EQ(s.lr(1400, 2), 0.0);
  EXPECT_NEAR(s.lr(1575, 2), 3.5e-5, 1e-20);
  EXPECT_EQ(s.lr(1750, 2), 7e-5);
  EXPECT_FALSE(s.warmup_done(1749));
  EXPECT_TRUE(s.warmup_done(1750));
  // A group never starts before the previous one has finished.
  for (std::size_t t = 0; t < 1750; ++t) {
    if (s.lr(t, 1) > 0.0) EXPECT_EQ(s.lr(t, 0), 7e-5);
    if (s.lr(t, 2) > 0.0) EXPECT_EQ(s.lr(t, 1), 7e-5);
  }
}

// --- metrics -------------------------------------------------------------------

TEST(Metrics, MaeAndRmse) {
  const std::vector<double> p = {1, 2, 3}, y = {1, 2, 5};
  EXPECT_DOUBLE_EQ(mae(p, y), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(rmse(p, y), std::sqrt(4.0 / 3.0));
  EXPECT_THROW(mae(p, std::vector<double>{1, 2}), std::invalid_argument);
}

// O(n^2) pair-counting AUC.
double auc_oracle(const std::vector<double>& s, const std::vector<double>& y) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] == 1 && y[j] == 0) {
        den += 1;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
    }
  }
  return num / den;
}

TEST(Metrics, RocAuc) {
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<double>{0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, std::vector<double>{0, 1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.9, 0.8, 0.2}, std::vector<double>{0, 0, 1}), 0.0);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 1}), std::invalid_argument);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 2}), std::invalid_argument);

  std::mt19937_64                         rng(3);
  std::uniform_int_distribution<int>      level(0, 4);
  std::bernoulli_distribution             coin(0.4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s, y;
    for (int i = 0; i < 30; ++i) {
      s.push_back(level(rng));  // many ties
      y.push_back(coin(rng) ? 1.0 : 0.0);
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_NEAR(roc_auc(s, y), auc_oracle(s, y), 1e-12);
  }
}

TEST(Metrics, Dispatch) {
  EXPECT_EQ(parse_metric("rmse"), MetricKind::kRmse);
  EXPECT_THROW(parse_metric("r2"), std::invalid_argument);
  EXPECT_DOUBLE_EQ(metric(MetricKind::kMae, std::vector<double>{0}, std::vector<double>{2}), 2.0);
}

}  // namespace
}  // namespace infomax3d
