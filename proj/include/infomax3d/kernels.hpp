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

// Data-parallel inner loops used by the autodiff ops and the geometry code.
//
// Every kernel exists twice: a plain serial reference in `serial::` and an
// OpenMP version in `parallel::`. The parallel versions split work over
// independent output rows only, so each output element is produced by the
// same sequence of floating-point operations as the serial reference and the
// two agree bit for bit. The unqualified functions dispatch on the configured
// thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "infomax3d/tensor.hpp"

namespace infomax3d::kernels {

//! Rows grouped into segments, CSR style: segment s owns
//! members[offsets[s] .. offsets[s+1]).
struct Segments {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> members;

  [[nodiscard]] std::size_t count() const { return offsets.size() - 1; }
  [[nodiscard]] std::size_t length(std::size_t s) const { return offsets[s + 1] - offsets[s]; }
  [[nodiscard]] std::span<const std::size_t> operator[](std::size_t s) const {
    return {members.data() + offsets[s], length(s)};
  }

  //! Groups row i under key[i]; members of each segment stay in ascending row order.
  static Segments from_keys(std::span<const std::size_t> keys, std::size_t num_segments);
  //! Segment s holds the contiguous rows [bounds[s], bounds[s+1]).
  static Segments contiguous(std::span<const std::size_t> bounds);
};

//! Number of threads used by the dispatching kernels (1 = serial reference).
void set_num_threads(int n);
int  num_threads();
//! Applies INFOMAX3D_THREADS from the environment when set.
void configure_from_env();

#define INFOMAX3D_KERNEL_DECLS                                                                      \
  /* C = A * B */                                                                                   \
  Tensor matmul(const Tensor& a, const Tensor& b);                                                  \
  /* C = A^T * B */                                                                                 \
  Tensor matmul_tn(const Tensor& a, const Tensor& b);                                               \
  /* C = A * B^T */                                                                                 \
  Tensor matmul_nt(const Tensor& a, const Tensor& b);                                               \
  Tensor pairwise_distances(const Tensor& coords);                                                  \
  Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);                          \
  /* out[t] = sum of x[i] over i with index[i] == t, accumulated in ascending i; inverse groups */ \
  /* rows of x by target. */                                                                        \
  Tensor scatter_add_rows(const Tensor& x, const Segments& inverse, std::size_t out_rows);          \
  /* Column-wise sum over each segment; values are summed in sorted order so the result only   */  \
  /* depends on the multiset of rows in the segment, not their order.                          */  \
  Tensor segment_sum(const Tensor& x, const Segments& seg);                                         \
  /* Column-wise max/min over each segment; argidx gets the first attaining member row.       */   \
  Tensor segment_max(const Tensor& x, const Segments& seg, std::vector<std::size_t>& argidx);       \
  Tensor segment_min(const Tensor& x, const Segments& seg, std::vector<std::size_t>& argidx);

namespace serial {
INFOMAX3D_KERNEL_DECLS
}  // namespace serial

namespace parallel {
INFOMAX3D_KERNEL_DECLS
}  // namespace parallel

INFOMAX3D_KERNEL_DECLS

#undef INFOMAX3D_KERNEL_DECLS

//! Sum of values that is independent of their order (sorts a copy first).
double order_independent_sum(std::span<double> scratch);

}  // namespace infomax3d::kernels
