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

// Loop-based reference implementations of the contrastive losses, written
// directly from their summation formulas without log-sum-exp tricks.

#include <algorithm>
#include <cmath>
#include <limits>

#include "infomax3d/tensor.hpp"

namespace infomax3d::testing::oracle {

inline double cos(const Tensor& a, std::size_t i, const Tensor& b, std::size_t k) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    dot += a(i, j) * b(k, j);
    na += a(i, j) * a(i, j);
    nb += b(k, j) * b(k, j);
  }
  return dot / std::sqrt(na * nb);
}

inline Tensor rows(const Tensor& x, std::size_t first, std::size_t count) {
  Tensor out(count, x.cols());
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(first + r, c);
  }
  return out;
}

//! -(1/N) sum_i log( sum_j e^{s(i, (i,j))/tau} / sum_{k != i} sum_j e^{s(i, (k,j))/tau} ).
inline double eq2(const Tensor& za, const Tensor& zb, std::size_t c, double tau, bool include_positive) {
  const std::size_t n = za.rows();
  double            total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < c; ++j) {
        const double e = std::exp(cos(za, i, zb, k * c + j) / tau);
        if (k == i) num += e;
        if (k != i || include_positive) den += e;
      }
    }
    total += std::log(num / den);
  }
  return -total / static_cast<double>(n);
}

inline double set_sim(const Tensor& za, std::size_t i, const Tensor& zb, std::size_t k, std::size_t c, bool use_max) {
  double s = 0.0;
  for (std::size_t kb = 0; kb < c; ++kb) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t ja = 0; ja < c; ++ja) {
      const double v = cos(za, i * c + ja, zb, k * c + kb);
      if (use_max) {
        best = std::max(best, v);
      } else {
        s += v;
      }
    }
    if (use_max) s += best;
  }
  return s;
}

inline double multi2d(const Tensor& za, const Tensor& zb, std::size_t c, double tau, bool use_max) {
  const std::size_t n = za.rows() / c;
  double            total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double den = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) den += std::exp(set_sim(za, i, zb, k, c, use_max) / tau);
    }
    total += std::log(std::exp(set_sim(za, i, zb, i, c, use_max) / tau) / den);
  }
  return -total / static_cast<double>(n);
}

}  // namespace infomax3d::testing::oracle
