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

#include "infomax3d/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace infomax3d::kernels {

namespace {

std::atomic<int> g_threads{1};

// Below this many output rows the dispatcher stays serial.
constexpr std::size_t kParallelMinRows = 64;

// Output rows per matmul work item.
constexpr std::size_t kMatmulBlock = 8;

constexpr std::size_t kNoIndex = std::numeric_limits<std::size_t>::max();

void check_inner(const char* op, std::size_t lhs, std::size_t rhs, const Tensor& a, const Tensor& b) {
  if (lhs != rhs) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

// Row kernels shared by both back ends. Each writes only its own output rows.

// Rows [i0, i1) of a * b. Each pass over a row of b serves the whole block;
// every output element still sums over k in ascending order.
inline void matmul_block(const Tensor& a, const Tensor& b, Tensor& c, std::size_t i0, std::size_t i1) {
  for (std::size_t k = 0; k < a.cols(); ++k) {
    auto brow = b.row_span(k);
    for (std::size_t i = i0; i < i1; ++i) {
      const double aik = a(i, k);
      if (aik == 0.0) {
        continue;
      }
      auto crow = c.row_span(i);
      for (std::size_t j = 0; j < crow.size(); ++j) {
        crow[j] += aik * brow[j];
      }
    }
  }
}

// Rows [i0, i1) of a^T * b, summing over r in ascending order.
inline void matmul_tn_block(const Tensor& a, const Tensor& b, Tensor& c, std::size_t i0, std::size_t i1) {
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto brow = b.row_span(r);
    for (std::size_t i = i0; i < i1; ++i) {
      const double ari = a(r, i);
      if (ari == 0.0) {
        continue;
      }
      auto crow = c.row_span(i);
      for (std::size_t j = 0; j < crow.size(); ++j) {
        crow[j] += ari * brow[j];
      }
    }
  }
}

inline void matmul_nt_row(const Tensor& a, const Tensor& b, Tensor& c, std::size_t i) {
  auto arow = a.row_span(i);
  for (std::size_t j = 0; j < b.rows(); ++j) {
    auto   brow = b.row_span(j);
    double s    = 0.0;
    for (std::size_t k = 0; k < arow.size(); ++k) {
      s += arow[k] * brow[k];
    }
    c(i, j) = s;
  }
}

inline void distance_row(const Tensor& x, Tensor& d, std::size_t u) {
  for (std::size_t v = 0; v < x.rows(); ++v) {
    if (u == v) {
      d(u, v) = 0.0;
      continue;
    }
    const double dx = x(u, 0) - x(v, 0);
    const double dy = x(u, 1) - x(v, 1);
    const double dz = x(u, 2) - x(v, 2);
    d(u, v)         = std::sqrt(dx * dx + dy * dy + dz * dz);
  }
}

inline void gather_row(const Tensor& x, std::span<const std::size_t> index, Tensor& out, std::size_t i) {
  auto src = x.row_span(index[i]);
  std::copy(src.begin(), src.end(), out.row_span(i).begin());
}

inline void scatter_row(const Tensor& x, const Segments& inverse, Tensor& out, std::size_t t) {
  auto dst = out.row_span(t);
  for (std::size_t i : inverse[t]) {
    auto src = x.row_span(i);
    for (std::size_t j = 0; j < dst.size(); ++j) {
      dst[j] += src[j];
    }
  }
}

inline void segment_sum_row(const Tensor& x, const Segments& seg, Tensor& out, std::size_t s) {
  const auto          members = seg[s];
  std::vector<double> scratch(members.size());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    for (std::size_t m = 0; m < members.size(); ++m) {
      scratch[m] = x(members[m], j);
    }
    out(s, j) = order_independent_sum(scratch);
  }
}

template <typename Better>
inline void segment_extreme_row(const Tensor& x, const Segments& seg, Tensor& out, std::vector<std::size_t>& arg,
                                std::size_t s, Better better) {
  const auto members = seg[s];
  for (std::size_t j = 0; j < x.cols(); ++j) {
    if (members.empty()) {
      out(s, j)              = 0.0;
      arg[s * x.cols() + j] = kNoIndex;
      continue;
    }
    std::size_t best = members[0];
    for (std::size_t m = 1; m < members.size(); ++m) {
      if (better(x(members[m], j), x(best, j))) {
        best = members[m];
      }
    }
    out(s, j)              = x(best, j);
    arg[s * x.cols() + j] = best;
  }
}

template <typename RowFn>
void run_serial(std::size_t n, RowFn&& fn) {
  for (std::size_t i = 0; i < n; ++i) {
    fn(i);
  }
}

template <typename RowFn>
void run_parallel(std::size_t n, RowFn&& fn) {
#ifdef _OPENMP
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) num_threads(g_threads.load())
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    fn(static_cast<std::size_t>(i));
  }
#else
  run_serial(n, fn);
#endif
}

// Instantiates one back end from the row kernels above.
template <bool Parallel>
struct Backend {
  template <typename RowFn>
  static void rows(std::size_t n, RowFn&& fn) {
    if constexpr (Parallel) {
      run_parallel(n, fn);
    } else {
      run_serial(n, fn);
    }
  }

  template <typename BlockFn>
  static void blocks(std::size_t n, BlockFn&& fn) {
    rows((n + kMatmulBlock - 1) / kMatmulBlock, [&](std::size_t blk) {
      const std::size_t i0 = blk * kMatmulBlock;
      fn(i0, std::min(n, i0 + kMatmulBlock));
    });
  }

  static Tensor matmul(const Tensor& a, const Tensor& b) {
    check_inner("matmul", a.cols(), b.rows(), a, b);
    Tensor c(a.rows(), b.cols());
    blocks(a.rows(), [&](std::size_t i0, std::size_t i1) { matmul_block(a, b, c, i0, i1); });
    return c;
  }

  static Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    check_inner("matmul_tn", a.rows(), b.rows(), a, b);
    Tensor c(a.cols(), b.cols());
    blocks(a.cols(), [&](std::size_t i0, std::size_t i1) { matmul_tn_block(a, b, c, i0, i1); });
    return c;
  }

  static Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check_inner("matmul_nt", a.cols(), b.cols(), a, b);
    Tensor c(a.rows(), b.rows());
    rows(a.rows(), [&](std::size_t i) { matmul_nt_row(a, b, c, i); });
    return c;
  }

  static Tensor pairwise_distances(const Tensor& coords) {
    if (coords.cols() != 3) {
      throw std::invalid_argument("pairwise_distances: expected n x 3 coordinates, got " + coords.shape_str());
    }
    Tensor d(coords.rows(), coords.rows());
    rows(coords.rows(), [&](std::size_t u) { distance_row(coords, d, u); });
    return d;
  }

  static Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
    for (std::size_t i : index) {
      if (i >= x.rows()) {
        throw std::out_of_range("gather_rows: index " + std::to_string(i) + " out of range for " + x.shape_str());
      }
    }
    Tensor out(index.size(), x.cols());
    rows(index.size(), [&](std::size_t i) { gather_row(x, index, out, i); });
    return out;
  }

  static Tensor scatter_add_rows(const Tensor& x, const Segments& inverse, std::size_t out_rows) {
    if (inverse.count() != out_rows) {
      throw std::invalid_argument("scatter_add_rows: segment count does not match output rows");
    }
    Tensor out(out_rows, x.cols());
    rows(out_rows, [&](std::size_t t) { scatter_row(x, inverse, out, t); });
    return out;
  }

  static Tensor segment_sum(const Tensor& x, const Segments& seg) {
    Tensor out(seg.count(), x.cols());
    rows(seg.count(), [&](std::size_t s) { segment_sum_row(x, seg, out, s); });
    return out;
  }

  static Tensor segment_max(const Tensor& x, const Segments& seg, std::vector<std::size_t>& arg) {
    Tensor out(seg.count(), x.cols());
    arg.assign(seg.count() * x.cols(), kNoIndex);
    rows(seg.count(),
         [&](std::size_t s) { segment_extreme_row(x, seg, out, arg, s, [](double a, double b) { return a > b; }); });
    return out;
  }

  static Tensor segment_min(const Tensor& x, const Segments& seg, std::vector<std::size_t>& arg) {
    Tensor out(seg.count(), x.cols());
    arg.assign(seg.count() * x.cols(), kNoIndex);
    rows(seg.count(),
         [&](std::size_t s) { segment_extreme_row(x, seg, out, arg, s, [](double a, double b) { return a < b; }); });
    return out;
  }
};

bool use_parallel(std::size_t out_rows) { return g_threads.load() > 1 && out_rows >= kParallelMinRows; }

}  // namespace

Segments Segments::from_keys(std::span<const std::size_t> keys, std::size_t num_segments) {
  Segments seg;
  seg.offsets.assign(num_segments + 1, 0);
  for (std::size_t k : keys) {
    if (k >= num_segments) {
      throw std::out_of_range("Segments::from_keys: key " + std::to_string(k) + " >= " + std::to_string(num_segments));
    }
    ++seg.offsets[k + 1];
  }
  for (std::size_t s = 0; s < num_segments; ++s) {
    seg.offsets[s + 1] += seg.offsets[s];
  }
  seg.members.resize(keys.size());
  std::vector<std::size_t> cursor(seg.offsets.begin(), seg.offsets.end() - 1);
  for (std::size_t i = 0; i < keys.size(); ++i) {
    seg.members[cursor[keys[i]]++] = i;
  }
  return seg;
}

Segments Segments::contiguous(std::span<const std::size_t> bounds) {
  Segments seg;
  seg.offsets.assign(bounds.begin(), bounds.end());
  if (seg.offsets.empty()) {
    seg.offsets.push_back(0);
  }
  const std::size_t base = seg.offsets.front();
  for (auto& o : seg.offsets) {
    o -= base;
  }
  seg.members.resize(seg.offsets.back());
  for (std::size_t i = 0; i < seg.members.size(); ++i) {
    seg.members[i] = base + i;
  }
  return seg;
}

void set_num_threads(int n) { g_threads.store(std::max(1, n)); }

int num_threads() { return g_threads.load(); }

void configure_from_env() {
  if (const char* env = std::getenv("INFOMAX3D_THREADS"); env != nullptr && *env != '\0') {
    set_num_threads(std::atoi(env));
  }
}

double order_independent_sum(std::span<double> scratch) {
  std::sort(scratch.begin(), scratch.end(), [](double a, double b) {
    if (a < b) return true;
    if (b < a) return false;
    return std::signbit(a) && !std::signbit(b);
  });
  double s = 0.0;
  for (double v : scratch) {
    s += v;
  }
  return s;
}

#define INFOMAX3D_KERNEL_DEFS(NS, PAR)                                                                              \
  namespace NS {                                                                                                    \
  Tensor matmul(const Tensor& a, const Tensor& b) { return Backend<PAR>::matmul(a, b); }                            \
  Tensor matmul_tn(const Tensor& a, const Tensor& b) { return Backend<PAR>::matmul_tn(a, b); }                      \
  Tensor matmul_nt(const Tensor& a, const Tensor& b) { return Backend<PAR>::matmul_nt(a, b); }                      \
  Tensor pairwise_distances(const Tensor& c) { return Backend<PAR>::pairwise_distances(c); }                         \
  Tensor gather_rows(const Tensor& x, std::span<const std::size_t> i) { return Backend<PAR>::gather_rows(x, i); }    \
  Tensor scatter_add_rows(const Tensor& x, const Segments& inv, std::size_t n) {                                    \
    return Backend<PAR>::scatter_add_rows(x, inv, n);                                                               \
  }                                                                                                                 \
  Tensor segment_sum(const Tensor& x, const Segments& s) { return Backend<PAR>::segment_sum(x, s); }                \
  Tensor segment_max(const Tensor& x, const Segments& s, std::vector<std::size_t>& a) {                             \
    return Backend<PAR>::segment_max(x, s, a);                                                                      \
  }                                                                                                                 \
  Tensor segment_min(const Tensor& x, const Segments& s, std::vector<std::size_t>& a) {                             \
    return Backend<PAR>::segment_min(x, s, a);                                                                      \
  }                                                                                                                 \
  }

INFOMAX3D_KERNEL_DEFS(serial, false)
INFOMAX3D_KERNEL_DEFS(parallel, true)

#undef INFOMAX3D_KERNEL_DEFS

Tensor matmul(const Tensor& a, const Tensor& b) {
  return use_parallel(a.rows()) ? parallel::matmul(a, b) : serial::matmul(a, b);
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  return use_parallel(a.cols()) ? parallel::matmul_tn(a, b) : serial::matmul_tn(a, b);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  return use_parallel(a.rows()) ? parallel::matmul_nt(a, b) : serial::matmul_nt(a, b);
}

Tensor pairwise_distances(const Tensor& coords) {
  return use_parallel(coords.rows()) ? parallel::pairwise_distances(coords) : serial::pairwise_distances(coords);
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  return use_parallel(index.size()) ? parallel::gather_rows(x, index) : serial::gather_rows(x, index);
}

Tensor scatter_add_rows(const Tensor& x, const Segments& inverse, std::size_t out_rows) {
  return use_parallel(out_rows) ? parallel::scatter_add_rows(x, inverse, out_rows)
                                : serial::scatter_add_rows(x, inverse, out_rows);
}

Tensor segment_sum(const Tensor& x, const Segments& seg) {
  return use_parallel(seg.count()) ? parallel::segment_sum(x, seg) : serial::segment_sum(x, seg);
}

Tensor segment_max(const Tensor& x, const Segments& seg, std::vector<std::size_t>& argidx) {
  return use_parallel(seg.count()) ? parallel::segment_max(x, seg, argidx) : serial::segment_max(x, seg, argidx);
}

Tensor segment_min(const Tensor& x, const Segments& seg, std::vector<std::size_t>& argidx) {
  return use_parallel(seg.count()) ? parallel::segment_min(x, seg, argidx) : serial::segment_min(x, seg, argidx);
}

}  // namespace infomax3d::kernels
