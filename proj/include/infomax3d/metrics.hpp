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

#include <span>
#include <string_view>

namespace infomax3d {

enum class MetricKind { kMae, kRmse, kRocAuc };

std::string_view to_string(MetricKind k);
MetricKind       parse_metric(std::string_view name);

double mae(std::span<const double> preds, std::span<const double> labels);
double rmse(std::span<const double> preds, std::span<const double> labels);
//! Mann-Whitney statistic with midranks for ties. Labels must be 0 or 1 with
//! both classes present.
double roc_auc(std::span<const double> scores, std::span<const double> labels);
double metric(MetricKind kind, std::span<const double> preds, std::span<const double> labels);

}  // namespace infomax3d
