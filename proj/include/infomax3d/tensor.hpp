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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace infomax3d {

//! Dense row-major matrix of doubles. Every array in the library is rank 2;
//! vectors are stored as 1 x d rows and scalars as 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row(std::span<const double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }
  [[nodiscard]] std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  [[nodiscard]] std::string shape_str() const;

  double&       operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double&       operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  [[nodiscard]] double item() const;

  [[nodiscard]] std::span<double>       row_span(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  [[nodiscard]] std::span<const double> row_span(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  [[nodiscard]] std::vector<double>&       data() { return data_; }
  [[nodiscard]] const std::vector<double>& data() const { return data_; }

  void fill(double v);
  [[nodiscard]] bool same_shape(const Tensor& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  [[nodiscard]] bool all_finite() const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t         rows_ = 0;
  std::size_t         cols_ = 0;
  std::vector<double> data_;
};

//! Largest absolute elementwise difference; throws on shape mismatch.
double max_abs_diff(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);
Tensor hconcat(std::span<const Tensor> parts);
Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows);

}  // namespace infomax3d
