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

#include "infomax3d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace infomax3d {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b, const char* op) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(a.size()) + " predictions for " +
                                std::to_string(b.size()) + " labels");
  }
  if (a.empty()) {
    throw std::invalid_argument(std::string(op) + ": no samples");
  }
}

}  // namespace

std::string_view to_string(MetricKind k) {
  switch (k) {
    case MetricKind::kMae: return "mae";
    case MetricKind::kRmse: return "rmse";
    case MetricKind::kRocAuc: return "roc_auc";
  }
  return "?";
}

MetricKind parse_metric(std::string_view name) {
  for (MetricKind k : {MetricKind::kMae, MetricKind::kRmse, MetricKind::kRocAuc}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown metric '" + std::string(name) + "' (use mae, rmse or roc_auc)");
}

double mae(std::span<const double> preds, std::span<const double> labels) {
  check_lengths(preds, labels, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - labels[i]);
  return s / static_cast<double>(preds.size());
}

double rmse(std::span<const double> preds, std::span<const double> labels) {
  check_lengths(preds, labels, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += (preds[i] - labels[i]) * (preds[i] - labels[i]);
  return std::sqrt(s / static_cast<double>(preds.size()));
}

double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  check_lengths(scores, labels, "roc_auc");
  std::size_t pos = 0;
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("roc_auc: labels must be 0 or 1");
    pos += y == 1.0 ? 1 : 0;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("roc_auc: need both classes, got " + std::to_string(pos) + " positive and " +
                                std::to_string(neg) + " negative labels");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double      rank_sum = 0.0;
  std::size_t i        = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1.0) rank_sum += midrank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double metric(MetricKind kind, std::span<const double> preds, std::span<const double> labels) {
  switch (kind) {
    case MetricKind::kMae: return mae(preds, labels);
    case MetricKind::kRmse: return rmse(preds, labels);
    case MetricKind::kRocAuc: return roc_auc(preds, labels);
  }
  throw std::logic_error("metric: bad kind");
}

}  // namespace infomax3d
